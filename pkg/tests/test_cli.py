import yaml

from collapse_lab.cli import EXIT_CONFIG, main


def write_config(path, scenarios):
    path.write_text(yaml.safe_dump({"schema_version": 1, "scenarios": scenarios}))
    return path


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", [{"name": "one", "mode": "theory",
                                              "regime": {"d": 10, "n": 20, "p2": 0.5, "c2": [0, 1]}}])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1", "--seed", "3"]) == 0
    assert (tmp_path / "o" / "one.csv").exists()
    assert (tmp_path / "o" / "one.json").exists()
    assert (tmp_path / "o" / "one.png").exists()
    assert "one: 2 rows" in capsys.readouterr().out


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", [{"name": "x", "mode": "bogus", "regime": {"d": 0}}])
    assert main(["run", "--config", str(cfg)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "x.mode" in err and "x.regime.d" in err


def test_verify_suite(capsys):
    assert main(["verify", "--suite", "gamma-infinity"]) == 0
    assert "[PASS] criterion 3" in capsys.readouterr().out


def test_verify_unknown_suite(capsys):
    assert main(["verify", "--suite", "no-such-suite"]) == EXIT_CONFIG
    assert "no-such-suite" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["run"]) == 2
