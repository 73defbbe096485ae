"""Grid expansion, evaluation and deterministic output for experiment scenarios.

Work is split into tasks (one theory evaluation or one simulation trial each) and
dispatched to a process pool.  Results are slotted back by task index, and every
task runs with BLAS pinned to one thread, so the CSV is byte-identical whatever the
worker count.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .config import Scenario
from .errors import CollapseLabError
from .fixed_point import LAMBDA_FLOOR, floor_lambda, is_near_threshold
from .risk_theory import (
    classical_risk,
    iterative_mixing,
    rp_risk,
    weighted_mixing_theory,
)
from .simulate import iterative_mixing_sim, shared_design_errors
from .spectra import ScalingRatios

COLUMNS = (
    "scenario", "mode", "d", "n", "m", "phi", "gamma", "psi", "p2", "c2", "lambda", "alpha", "step",
    "B", "V", "zeta", "E_theory", "E_emp_mean", "E_emp_se", "trials", "near_threshold", "seed",
    "flags", "error",
)


def conventions(scn: Scenario | None = None) -> dict:
    """Every modelling convention that affects the numbers in a results file."""
    return {
        "lambda_floor": LAMBDA_FLOOR,
        "near_threshold_rule": "|psi - 1| < 0.01 and lambda < 1e-6",
        "fixed_point_iteration": "damped Picard, damping 0.5, rtol 1e-12, max 1e5 iterations, bracketed fallback",
        "u_omega_prime": "exact 2x2 linear solve, omega' = theta^2 I12 / det",
        "rp_variance_normalization": "sigma^2 / (e n)",
        "rp_zeta_omega_coefficient": "p2^2" if scn is None or scn.zeta_omega_coeff == "p2sq" else "p2",
        "rp_lambda_scale": "ridge penalty on the read-out weights; weight-space ridge is lambda / gamma",
        "quality": "c2 = tr(Sigma Delta)",
        "projection_matrix": "S in R^{d x m}, iid N(0, 1/d), features S^T x",
        "alpha_orientation": "alpha weights the synthetic loss term",
        "weighted_fit_lambda": "unchanged by alpha",
        "iterative_baseline": "sigma^2 phi / (1 - phi)",
        "iterative_synthetic_noise": "sigma2 reused at every step",
        "test_error": "exact Sigma-norm distance to w1*",
        "rng": "Philox keyed by (seed, crc32(scenario), trial, stream role, step)",
        "ridge_solver": "Cholesky; primal when d <= rows, dual otherwise",
        "noise_parameters": "sigma1, sigma2 are standard deviations",
    }


@dataclass(frozen=True)
class Cell:
    """One grid point apart from c2, which is shared so one design serves all qualities."""

    d: int
    n: int
    n2: int
    m: int | None
    lam: float
    alpha: float | None

    @property
    def p2(self) -> float:
        return self.n2 / self.n

    @property
    def phi(self) -> float:
        return self.d / self.n

    def ratios(self) -> ScalingRatios:
        gamma = None if self.m is None else self.m / self.d
        return ScalingRatios(phi=self.phi, p2=self.p2, gamma=gamma)


def expand_cells(scn: Scenario) -> list[Cell]:
    cells = []
    p2_grid = list(scn.p2)
    if scn.mode == "pareto" and 0.0 not in p2_grid:
        p2_grid = [0.0] + p2_grid
    for n in scn.n:
        m_grid = [None] if scn.m is None else scn.m
        for m_spec in m_grid:
            if isinstance(m_spec, tuple):
                m = max(1, int(round(m_spec[1] * n)))
            else:
                m = m_spec
            for p2 in p2_grid:
                n2 = int(round(p2 * n))
                for lam in scn.lam:
                    for alpha in (scn.alpha or [None]):
                        cells.append(Cell(scn.d, n, n2, m, lam, alpha))
    return cells


def _theory(scn: Scenario, cell: Cell, c2: float) -> dict:
    model = scn.model.build(scn.d, c2)
    ratios = cell.ratios()
    if cell.alpha is not None:
        risk = weighted_mixing_theory(model, ratios, cell.alpha, cell.lam)
    elif cell.m is not None:
        risk = rp_risk(model, ratios, cell.lam, zeta_omega_coeff=scn.zeta_omega_coeff)
    else:
        risk = classical_risk(model, ratios, cell.lam)
    scalars = {k: v for k, v in risk.scalars.items() if isinstance(v, (int, float, str))}
    return {"B": risk.bias, "V": risk.variance, "zeta": risk.collapse, "E_theory": risk.total,
            "flags": sorted(risk.flags), "scalars": scalars}


def theory_task(scn: Scenario, cell: Cell) -> list[dict]:
    out = []
    with threadpool_limits(1):
        for c2 in scn.c2:
            try:
                out.append(_theory(scn, cell, c2))
            except (CollapseLabError, ArithmeticError, ValueError) as exc:
                out.append({"error": f"{type(exc).__name__}: {exc}"})
    return out


def simulation_task(scn: Scenario, cell: Cell, trial: int):
    """Test errors of one trial for every c2 of the cell, or an error message."""
    with threadpool_limits(1):
        models = [scn.model.build(scn.d, c2) for c2 in scn.c2]
        lam, _ = floor_lambda(cell.lam)
        try:
            return shared_design_errors(models, cell.n - cell.n2, cell.n2, lam, scn.seed, scn.name, trial,
                                        m=cell.m, alpha=cell.alpha)
        except (CollapseLabError, ArithmeticError, ValueError) as exc:
            return f"{type(exc).__name__}: {exc}"


def iterate_task(scn: Scenario, cell: Cell, c2: float, trial: int):
    with threadpool_limits(1):
        model = scn.model.build(scn.d, c2)
        lam, _ = floor_lambda(cell.lam)
        try:
            tr = iterative_mixing_sim(model, scn.d, cell.n, cell.p2, lam, scn.steps, scn.seed, scn.name, trial)
            return tr.risk_sequence
        except (CollapseLabError, ArithmeticError, ValueError) as exc:
            return f"{type(exc).__name__}: {exc}"


def _call(args):
    fn, rest = args
    return fn(*rest)


def _run_tasks(tasks: list, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [_call(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_call, tasks, chunksize=1))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        return float(vals.mean()) if vals.size else math.nan, math.nan
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(vals.size))


def _base_row(scn: Scenario, cell: Cell, c2: float) -> dict:
    lam_used, floored = floor_lambda(cell.lam)
    psi = None if cell.m is None else cell.m / cell.n
    return {
        "scenario": scn.name, "mode": scn.mode, "d": cell.d, "n": cell.n, "m": cell.m,
        "phi": cell.phi, "gamma": None if cell.m is None else cell.m / cell.d, "psi": psi,
        "p2": cell.p2, "c2": c2, "lambda": lam_used, "alpha": cell.alpha, "step": None,
        "B": None, "V": None, "zeta": None, "E_theory": None, "E_emp_mean": None, "E_emp_se": None,
        "trials": 0, "near_threshold": is_near_threshold(psi, lam_used), "seed": scn.seed,
        "flags": ["lambda_floored"] if floored else [], "error": None,
    }


def run_scenario_rows(scn: Scenario, threads: int = 1) -> tuple[list[dict], list[dict]]:
    """Evaluate a scenario; returns (CSV rows, per-row fixed-point scalars)."""
    cells = expand_cells(scn)
    if scn.mode == "iterate":
        return _run_iterate(scn, cells, threads)
    want_theory = scn.mode in ("theory", "compare", "pareto")
    want_sim = scn.mode in ("simulate", "compare") or (scn.mode == "pareto" and scn.trials >= 2)
    tasks = []
    if want_theory:
        tasks += [(theory_task, (scn, c)) for c in cells]
    n_theory = len(tasks)
    if want_sim:
        tasks += [(simulation_task, (scn, c, t)) for c in cells for t in range(scn.trials)]
    results = _run_tasks(tasks, threads)
    theory_res = results[:n_theory]
    sim_res = results[n_theory:]
    rows, scalars = [], []
    for ci, cell in enumerate(cells):
        trials_out = sim_res[ci * scn.trials:(ci + 1) * scn.trials] if want_sim else []
        for k, c2 in enumerate(scn.c2):
            row = _base_row(scn, cell, c2)
            sc = {}
            if want_theory:
                th = theory_res[ci][k]
                if "error" in th:
                    row["error"] = th["error"]
                else:
                    row.update({key: th[key] for key in ("B", "V", "zeta", "E_theory")})
                    row["flags"] = sorted(set(row["flags"]) | set(th["flags"]))
                    sc = th["scalars"]
            if want_sim:
                errs = [t[k] for t in trials_out if not isinstance(t, str)]
                fails = [t for t in trials_out if isinstance(t, str)]
                if fails:
                    row["error"] = "; ".join(filter(None, [row["error"], fails[0]]))
                row["trials"] = len(errs)
                if errs:
                    row["E_emp_mean"], row["E_emp_se"] = _mean_se(np.array(errs))
            rows.append(row)
            scalars.append(sc)
    return rows, scalars


def _run_iterate(scn: Scenario, cells: list[Cell], threads: int):
    tasks = [(iterate_task, (scn, c, c2, t)) for c in cells for c2 in scn.c2 for t in range(scn.trials)]
    results = _run_tasks(tasks, threads)
    rows, scalars = [], []
    idx = 0
    for cell in cells:
        for c2 in scn.c2:
            chunk = results[idx: idx + scn.trials]
            idx += scn.trials
            model = scn.model.build(scn.d, c2)
            sigma2 = model.pooled_noise(cell.ratios())
            theory = None
            err = None
            try:
                theory = iterative_mixing(c2, cell.p2, sigma2, cell.phi, scn.steps)
            except (CollapseLabError, ArithmeticError, ValueError) as exc:
                err = f"{type(exc).__name__}: {exc}"
            ok = np.array([r for r in chunk if not isinstance(r, str)])
            fails = [r for r in chunk if isinstance(r, str)]
            for t in range(1, scn.steps + 1):
                row = _base_row(scn, cell, c2)
                row["step"] = t
                row["error"] = "; ".join(filter(None, [err, fails[0] if fails else None])) or None
                if theory is not None:
                    row["E_theory"] = float(theory.quality_sequence[t])
                if ok.size:
                    row["trials"] = ok.shape[0]
                    row["E_emp_mean"], row["E_emp_se"] = _mean_se(ok[:, t - 1])
                rows.append(row)
                scalars.append({} if theory is None else {"baseline": theory.baseline})
    return rows, scalars


# --------------------------------------------------------------------------- output


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return format(f, ".17g")
    if isinstance(v, (list, tuple, set, frozenset)):
        return ";".join(sorted(str(x) for x in v))
    return str(v)


def write_csv(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(COLUMNS)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in COLUMNS])
    return path


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def write_sidecar(scn: Scenario, scalars: list[dict], path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "tool": "collapse-lab",
        "version": __version__,
        "schema_version": 1,
        "scenario": _jsonable(scn.raw),
        "conventions": conventions(scn),
        "rows": [{"row": i, "fixed_point": _jsonable(sc)} for i, sc in enumerate(scalars)],
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


@dataclass
class ScenarioOutput:
    csv_path: Path
    json_path: Path
    figure_path: Path | None
    rows: list

    def as_dict(self):
        return {k: str(v) for k, v in asdict(self).items() if k != "rows"}


def run_scenario(scn: Scenario, out_dir: str | Path, threads: int = 1, figures: bool = True) -> ScenarioOutput:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, scalars = run_scenario_rows(scn, threads)
    csv_path = write_csv(rows, out_dir / f"{scn.name}.csv")
    json_path = write_sidecar(scn, scalars, out_dir / f"{scn.name}.json")
    fig = None
    if figures:
        from .plotting import render_scenario

        fig = render_scenario(scn, rows, out_dir / f"{scn.name}.png")
    return ScenarioOutput(csv_path, json_path, fig, rows)
