"""Experiment configuration: YAML schema, grid syntax and validation.

A configuration file holds ``schema_version: 1`` and a list of ``scenarios``::

    schema_version: 1
    scenarios:
      - name: rp-sweep
        mode: compare            # theory | simulate | compare | iterate | pareto
        model:
          spectrum: {kind: power_law, exponent: 1.0}   # or isotropic / explicit
          gamma_prior: {kind: isotropic, r2: 1.0}      # Gamma = (r2/d) I
          delta: {kind: inverse_covariance}            # or isotropic / explicit
          sigma1: 0.1                                  # label-noise standard deviations
          sigma2: 0.1
        regime:
          d: 600
          n: 500                 # or phi: grid
          psi: "0.25:0.25:4"     # or m: grid; omit both for the classical model
          p2: 0.4
          c2: [0, 0.1, 0.5, 1]
          lambda: 1e-8
        trials: 5
        seed: 0

Grids are a scalar, an explicit list, or a ``"start:step:stop"`` string with the
stop included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import ConfigError, DomainError
from .spectra import MixtureModel, Spectrum, build_power_law_spectrum

SCHEMA_VERSION = 1
MODES = ("theory", "simulate", "compare", "iterate", "pareto")
SPECTRUM_KINDS = ("isotropic", "power_law", "explicit")
DELTA_KINDS = ("isotropic", "inverse_covariance", "explicit")


def parse_grid(value, name: str, problems: list, integer: bool = False) -> list:
    """Expand a grid spec into a list of numbers; append to ``problems`` on failure."""
    if value is None:
        problems.append(f"{name}: missing")
        return []
    if isinstance(value, str) and ":" in value:
        parts = value.split(":")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError:
            problems.append(f"{name}: grid {value!r} is not start:step:stop")
            return []
        if step <= 0 or stop < start:
            problems.append(f"{name}: grid {value!r} needs step > 0 and stop >= start")
            return []
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + i * step, 12) for i in range(count)]
    elif isinstance(value, (list, tuple)):
        vals = list(value)
    else:
        vals = [value]
    out = []
    for v in vals:
        try:
            f = float(v)
        except (TypeError, ValueError):
            problems.append(f"{name}: {v!r} is not a number")
            continue
        if not math.isfinite(f):
            problems.append(f"{name}: {v!r} is not finite")
            continue
        if integer:
            if f != int(f):
                problems.append(f"{name}: {v!r} is not an integer")
                continue
            out.append(int(f))
        else:
            out.append(f)
    if not out and not any(p.startswith(name) for p in problems):
        problems.append(f"{name}: grid is empty")
    return out


@dataclass(frozen=True)
class ModelSpec:
    spectrum: dict
    gamma_prior: dict
    delta: dict
    sigma1: float
    sigma2: float

    def build(self, d: int, c2: float) -> MixtureModel:
        sigma = build_spectrum(self.spectrum, d)
        gp = self.gamma_prior
        if gp.get("kind", "isotropic") == "isotropic":
            gamma = Spectrum.identity(d, float(gp.get("r2", 1.0)) / d, "signal_prior")
        else:
            gamma = Spectrum(np.asarray(gp["values"], dtype=float), "signal_prior")
        return MixtureModel(sigma, gamma, build_delta(self.delta, sigma, c2),
                            self.sigma1**2, self.sigma2**2)


def build_spectrum(spec: dict, d: int) -> Spectrum:
    kind = spec.get("kind", "isotropic")
    if kind == "isotropic":
        return Spectrum.identity(d, float(spec.get("scale", 1.0)))
    if kind == "power_law":
        return build_power_law_spectrum(d, float(spec.get("exponent", 1.0)))
    vals = np.asarray(spec["values"], dtype=float)
    if vals.size != d:
        raise DomainError(f"explicit spectrum has {vals.size} values, d={d}")
    return Spectrum(vals)


def build_delta(spec: dict, sigma: Spectrum, c2: float) -> Spectrum:
    """Shift prior with quality tr(Sigma Delta) = c2."""
    kind = spec.get("kind", "isotropic")
    d = sigma.d
    if kind == "isotropic":
        return Spectrum(np.full(d, c2 / sigma.trace), "shift_prior")
    if kind == "inverse_covariance":
        return Spectrum(c2 / d / sigma.eigenvalues, "shift_prior")
    shape = np.asarray(spec["values"], dtype=float)
    q = float(np.dot(shape, sigma.eigenvalues))
    if shape.size != d or q <= 0:
        raise DomainError("explicit delta must have d non-negative values with positive quality")
    return Spectrum(c2 * shape / q, "shift_prior")


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    model: ModelSpec
    d: int
    n: tuple
    m: tuple | None
    p2: tuple
    c2: tuple
    lam: tuple
    alpha: tuple | None
    steps: int
    trials: int
    seed: int
    zeta_omega_coeff: str = "p2sq"
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def uses_projection(self) -> bool:
        return self.m is not None


def _spectrum_problems(spec, name, d, problems):
    if not isinstance(spec, dict):
        problems.append(f"{name}: must be a mapping")
        return
    kind = spec.get("kind", "isotropic")
    if kind not in SPECTRUM_KINDS:
        problems.append(f"{name}.kind: {kind!r} not in {SPECTRUM_KINDS}")
    elif kind == "explicit":
        vals = spec.get("values")
        if not isinstance(vals, list) or len(vals) != d:
            problems.append(f"{name}.values: need a list of d={d} numbers")
        elif any((not isinstance(v, (int, float))) or v <= 0 for v in vals):
            problems.append(f"{name}.values: eigenvalues must be positive numbers")
    elif kind == "power_law" and not isinstance(spec.get("exponent", 1.0), (int, float)):
        problems.append(f"{name}.exponent: must be a number")


def parse_scenario(raw: Any, index: int, default_seed: int | None = None) -> Scenario:
    problems: list[str] = []
    where = f"scenarios[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError([f"{where}: must be a mapping"])
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        problems.append(f"{where}.name: required non-empty string")
        name = f"scenario{index}"
    where = f"{name}"
    mode = raw.get("mode", "theory")
    if mode not in MODES:
        problems.append(f"{where}.mode: {mode!r} not in {MODES}")
    model_raw = raw.get("model", {}) or {}
    regime = raw.get("regime")
    if not isinstance(regime, dict):
        problems.append(f"{where}.regime: required mapping")
        regime = {}
    d = regime.get("d")
    if not isinstance(d, int) or d < 1:
        problems.append(f"{where}.regime.d: positive integer required")
        d = 1
    spectrum = model_raw.get("spectrum", {"kind": "isotropic"})
    _spectrum_problems(spectrum, f"{where}.model.spectrum", d, problems)
    gamma_prior = model_raw.get("gamma_prior", {"kind": "isotropic", "r2": 1.0})
    if not isinstance(gamma_prior, dict) or gamma_prior.get("kind", "isotropic") not in ("isotropic", "explicit"):
        problems.append(f"{where}.model.gamma_prior: kind must be isotropic or explicit")
        gamma_prior = {"kind": "isotropic"}
    delta = model_raw.get("delta", {"kind": "isotropic"})
    if not isinstance(delta, dict) or delta.get("kind", "isotropic") not in DELTA_KINDS:
        problems.append(f"{where}.model.delta.kind: must be one of {DELTA_KINDS}")
        delta = {"kind": "isotropic"}
    sig = []
    for key in ("sigma1", "sigma2"):
        v = model_raw.get(key, 1.0)
        if not isinstance(v, (int, float)) or v < 0:
            problems.append(f"{where}.model.{key}: non-negative number required")
            v = 1.0
        sig.append(float(v))

    if "n" in regime and "phi" in regime:
        problems.append(f"{where}.regime: give n or phi, not both")
    if "n" in regime:
        n = parse_grid(regime["n"], f"{where}.regime.n", problems, integer=True)
    else:
        phis = parse_grid(regime.get("phi"), f"{where}.regime.phi (or n)", problems)
        n = [max(1, int(round(d / p))) for p in phis if p > 0]
        if any(p <= 0 for p in phis):
            problems.append(f"{where}.regime.phi: values must be positive")
    if any(v < 1 for v in n):
        problems.append(f"{where}.regime.n: values must be >= 1")

    m = None
    if "m" in regime and "psi" in regime:
        problems.append(f"{where}.regime: give m or psi, not both")
    elif "m" in regime:
        m = parse_grid(regime["m"], f"{where}.regime.m", problems, integer=True)
        if any(v < 1 for v in m):
            problems.append(f"{where}.regime.m: values must be >= 1")
    elif "psi" in regime:
        m = parse_grid(regime["psi"], f"{where}.regime.psi", problems)
        if any(v <= 0 for v in m):
            problems.append(f"{where}.regime.psi: values must be positive")
        m = [("psi", v) for v in m]

    p2 = parse_grid(regime.get("p2", 0.0), f"{where}.regime.p2", problems)
    if any(not 0 <= v <= 1 for v in p2):
        problems.append(f"{where}.regime.p2: values must lie in [0, 1]")
    c2 = parse_grid(regime.get("c2", 0.0), f"{where}.regime.c2", problems)
    if any(v < 0 for v in c2):
        problems.append(f"{where}.regime.c2: values must be non-negative")
    lam = parse_grid(regime.get("lambda", 1e-8), f"{where}.regime.lambda", problems)
    if any(v < 0 for v in lam):
        problems.append(f"{where}.regime.lambda: values must be non-negative")
    alpha = None
    if "alpha" in regime:
        alpha = parse_grid(regime["alpha"], f"{where}.regime.alpha", problems)
        if any(not 0 <= v <= 1 for v in alpha):
            problems.append(f"{where}.regime.alpha: values must lie in [0, 1]")
        if m is not None:
            problems.append(f"{where}.regime.alpha: weighted fits are only available without projections")
    steps = regime.get("steps", 0)
    if not isinstance(steps, int) or steps < 0:
        problems.append(f"{where}.regime.steps: non-negative integer required")
        steps = 0
    if mode == "iterate":
        if steps < 1:
            problems.append(f"{where}.regime.steps: iterate mode needs steps >= 1")
        if m is not None or alpha is not None:
            problems.append(f"{where}: iterate mode uses the classical pooled fit (no m/psi/alpha)")
    if mode == "pareto" and m is None:
        problems.append(f"{where}: pareto mode needs an m or psi grid")
    trials = raw.get("trials", 5)
    needs_sim = mode in ("simulate", "compare", "iterate")
    if not isinstance(trials, int) or trials < 0 or (needs_sim and trials < 2):
        problems.append(f"{where}.trials: integer >= 2 required for mode {mode}")
        trials = 2
    seed = raw.get("seed", default_seed if default_seed is not None else 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        problems.append(f"{where}.seed: 64-bit non-negative integer required")
        seed = 0
    zc = raw.get("zeta_omega_coeff", "p2sq")
    if zc not in ("p2sq", "p2"):
        problems.append(f"{where}.zeta_omega_coeff: must be p2sq or p2")
    if problems:
        raise ConfigError(problems)
    return Scenario(
        name=name, mode=mode,
        model=ModelSpec(spectrum, gamma_prior, delta, sig[0], sig[1]),
        d=d, n=tuple(n), m=None if m is None else tuple(m), p2=tuple(p2), c2=tuple(c2),
        lam=tuple(lam), alpha=None if alpha is None else tuple(alpha), steps=steps,
        trials=trials, seed=seed, zeta_omega_coeff=zc, raw=raw,
    )


def parse_config(data: Any, seed_override: int | None = None) -> list[Scenario]:
    if not isinstance(data, dict):
        raise ConfigError(["top level: must be a mapping"])
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError([f"schema_version: expected {SCHEMA_VERSION}, got {version!r}"])
    raw_list = data.get("scenarios")
    if not isinstance(raw_list, list) or not raw_list:
        raise ConfigError(["scenarios: non-empty list required"])
    problems, out = [], []
    for i, raw in enumerate(raw_list):
        if seed_override is not None and isinstance(raw, dict):
            raw = {**raw, "seed": seed_override}
        try:
            out.append(parse_scenario(raw, i))
        except ConfigError as exc:
            problems.extend(exc.problems)
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        problems.append("scenarios: names must be unique")
    if problems:
        raise ConfigError(problems)
    return out


def load_config(path: str | Path, seed_override: int | None = None) -> list[Scenario]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: not valid YAML ({exc})"]) from exc
    return parse_config(data, seed_override)
