"""Finite-size Monte Carlo: Gaussian mixtures of real and synthetic data and their ridge fits.

Randomness comes from counter-based Philox streams keyed by
``(seed, scenario, trial, role)``, so any single trial can be regenerated on its own
and results do not depend on the order in which trials run.

Draws are nested: the real design is sampled with shape ``(n1, d)`` and the
projection with shape ``(m, d)``, so a point with more samples (or a wider
projection) extends the draws of a smaller one.  Neighbouring grid points then
share their randomness, which makes sweeps smooth in n and m.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DomainError, NumericError
from .spectra import MixtureModel, Spectrum, check_same_dimension

STREAM_ROLES = {
    "prior": 0,
    "data_real": 1,
    "data_syn": 2,
    "noise_real": 3,
    "noise_syn": 4,
    "projection": 5,
}


def make_rng(seed: int, scenario: str = "default", trial: int = 0, role: str = "data_real",
             step: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, scenario, trial, role, step) key."""
    if role not in STREAM_ROLES:
        raise DomainError(f"unknown stream role {role!r}")
    key = [int(seed) & (2**64 - 1), zlib.crc32(scenario.encode()), int(trial), STREAM_ROLES[role], int(step)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass(frozen=True)
class Dataset:
    x_real: np.ndarray
    y_real: np.ndarray
    x_syn: np.ndarray
    y_syn: np.ndarray
    w1_star: np.ndarray
    w2_star: np.ndarray
    sigma: np.ndarray
    seed: int = 0
    scenario: str = "default"
    trial: int = 0

    @property
    def d(self) -> int:
        return self.w1_star.size

    @property
    def n1(self) -> int:
        return self.x_real.shape[0]

    @property
    def n2(self) -> int:
        return self.x_syn.shape[0]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        return np.vstack([self.x_real, self.x_syn]), np.concatenate([self.y_real, self.y_syn])


@dataclass(frozen=True)
class SimRun:
    fitted: np.ndarray
    test_error: float
    seed: int
    trial_index: int


def gaussian_design(rng: np.random.Generator, n: int, sigma: np.ndarray) -> np.ndarray:
    """n rows drawn from N(0, diag(sigma))."""
    return rng.standard_normal((n, sigma.size)) * np.sqrt(sigma)


def draw_weights(model: MixtureModel, seed: int, scenario: str = "default", trial: int = 0):
    rng = make_rng(seed, scenario, trial, "prior")
    w1 = rng.standard_normal(model.d) * np.sqrt(model.gamma_prior.eigenvalues)
    delta = rng.standard_normal(model.d) * np.sqrt(model.delta.eigenvalues)
    return w1, w1 + delta


def sample_dataset(model: MixtureModel, d: int, n1: int, n2: int, seed: int,
                   scenario: str = "default", trial: int = 0) -> Dataset:
    """Draw the true weights, the shift and both samples; reproducible from its key."""
    if d != model.d:
        raise DomainError(f"d={d} does not match the model dimension {model.d}")
    if n1 < 0 or n2 < 0 or n1 + n2 < 1:
        raise DomainError("need n1, n2 >= 0 and n1 + n2 >= 1")
    s = model.sigma.eigenvalues
    w1, w2 = draw_weights(model, seed, scenario, trial)
    x1 = gaussian_design(make_rng(seed, scenario, trial, "data_real"), n1, s)
    x2 = gaussian_design(make_rng(seed, scenario, trial, "data_syn"), n2, s)
    eps1 = make_rng(seed, scenario, trial, "noise_real").standard_normal(n1) * np.sqrt(model.noise1)
    eps2 = make_rng(seed, scenario, trial, "noise_syn").standard_normal(n2) * np.sqrt(model.noise2)
    return Dataset(x1, x1 @ w1 + eps1, x2, x2 @ w2 + eps2, w1, w2, s, seed, scenario, trial)


def exact_test_error(w: np.ndarray, w_star: np.ndarray, sigma: np.ndarray) -> float:
    """||w - w*||^2 in the Sigma norm: the test error with no test-set sampling."""
    diff = w - w_star
    return float(np.dot(sigma, diff * diff))


def solve_ridge(x: np.ndarray, y: np.ndarray, lam: float, weights: np.ndarray | float,
                dual: bool | None = None) -> np.ndarray:
    """Minimizer of sum_i weights_i (x_i^T w - y_i)^2 + lam ||w||^2.

    The primal d x d system is used when d <= number of rows, the dual otherwise;
    ``dual`` forces one path.  Both use a Cholesky factorization.  ``y`` may hold
    several right-hand sides as columns.
    """
    if lam <= 0:
        raise DomainError("lambda must be positive")
    n, d = x.shape
    sw = np.sqrt(np.broadcast_to(np.asarray(weights, dtype=float), (n,)))
    xs = x * sw[:, None]
    ys = y * (sw if y.ndim == 1 else sw[:, None])
    if dual is None:
        dual = d > n
    gram = xs @ xs.T if dual else xs.T @ xs
    gram[np.diag_indices_from(gram)] += lam
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=True)
        if dual:
            return xs.T @ linalg.cho_solve(factor, ys)
        return linalg.cho_solve(factor, xs.T @ ys)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"ridge factorization failed: {exc}", float(np.linalg.cond(gram))) from exc


def ridge_fit(dataset: Dataset, lam: float, dual: bool | None = None) -> SimRun:
    """Pooled ridge: (X^T X / n + lam) w = X^T Y / n."""
    x, y = dataset.pooled()
    w = solve_ridge(x, y, lam, 1.0 / dataset.n, dual)
    return SimRun(w, exact_test_error(w, dataset.w1_star, dataset.sigma), dataset.seed, dataset.trial)


def draw_projection(d: int, m: int, seed: int, scenario: str = "default", trial: int = 0) -> np.ndarray:
    """S in R^{d x m} with iid N(0, 1/d) entries; columns are nested across m."""
    if m < 1:
        raise DomainError("m must be at least 1")
    rng = make_rng(seed, scenario, trial, "projection")
    return (rng.standard_normal((m, d)) / np.sqrt(d)).T


def rp_fit(dataset: Dataset, m: int, lam: float, seed: int | None = None,
           projection: np.ndarray | None = None) -> SimRun:
    """Ridge on the projected features S^T x, returning the effective weights S v.

    ``projection`` overrides the random S (for instance with the identity).
    """
    seed = dataset.seed if seed is None else seed
    S = draw_projection(dataset.d, m, seed, dataset.scenario, dataset.trial) if projection is None else projection
    if S.shape[0] != dataset.d:
        raise DomainError("projection must have d rows")
    x, y = dataset.pooled()
    v = solve_ridge(x @ S, y, lam, 1.0 / dataset.n)
    w = S @ v
    return SimRun(w, exact_test_error(w, dataset.w1_star, dataset.sigma), seed, dataset.trial)


def mixing_row_weights(alpha: float, n1: int, n2: int) -> np.ndarray:
    """Per-row loss weights (1 - alpha)/n1 on real rows and alpha/n2 on synthetic rows."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0, 1]")
    if n1 == 0 and alpha < 1 or n2 == 0 and alpha > 0:
        raise DomainError("a source with positive weight has no samples")
    w1 = (1.0 - alpha) / n1 if n1 else 0.0
    w2 = alpha / n2 if n2 else 0.0
    return np.concatenate([np.full(n1, w1), np.full(n2, w2)])


def weighted_ridge_fit(dataset: Dataset, alpha: float, lam: float) -> SimRun:
    """Minimize (1-alpha)/n1 ||X1 w - Y1||^2 + alpha/n2 ||X2 w - Y2||^2 + lam ||w||^2.

    lambda is not rescaled with alpha, so at alpha = 0 this is ridge on the real
    rows alone with the same lambda.
    """
    x, y = dataset.pooled()
    wts = mixing_row_weights(alpha, dataset.n1, dataset.n2)
    keep = wts > 0
    w = solve_ridge(x[keep], y[keep], lam, wts[keep])
    return SimRun(w, exact_test_error(w, dataset.w1_star, dataset.sigma), dataset.seed, dataset.trial)


def shared_design_errors(models: list[MixtureModel], n1: int, n2: int, lam: float, seed: int,
                         scenario: str = "default", trial: int = 0, m: int | None = None,
                         alpha: float | None = None) -> np.ndarray:
    """Exact test errors for several models that share Sigma and the noise levels.

    The design, the noise and the standard-normal draws behind w1* and delta are the
    same for every model (they come from the same streams), so one factorization
    serves all of them.  Each entry equals what ``sample_dataset`` followed by
    ``ridge_fit`` / ``rp_fit`` / ``weighted_ridge_fit`` gives for that model, up to
    rounding.
    """
    base = models[0]
    s = base.sigma.eigenvalues
    for mod in models[1:]:
        if not np.array_equal(mod.sigma.eigenvalues, s) or (mod.noise1, mod.noise2) != (base.noise1, base.noise2):
            raise DomainError("shared-design models must have the same Sigma and noise levels")
    x1 = gaussian_design(make_rng(seed, scenario, trial, "data_real"), n1, s)
    x2 = gaussian_design(make_rng(seed, scenario, trial, "data_syn"), n2, s)
    eps1 = make_rng(seed, scenario, trial, "noise_real").standard_normal(n1) * np.sqrt(base.noise1)
    eps2 = make_rng(seed, scenario, trial, "noise_syn").standard_normal(n2) * np.sqrt(base.noise2)
    stars = [draw_weights(mod, seed, scenario, trial) for mod in models]
    Y = np.column_stack([np.concatenate([x1 @ w1 + eps1, x2 @ w2 + eps2]) for w1, w2 in stars])
    x = np.vstack([x1, x2])
    n = n1 + n2
    if alpha is None:
        weights = np.full(n, 1.0 / n)
    else:
        weights = mixing_row_weights(alpha, n1, n2)
    keep = weights > 0
    if m is not None:
        S = draw_projection(base.d, m, seed, scenario, trial)
        W = S @ solve_ridge(x[keep] @ S, Y[keep], lam, weights[keep])
    else:
        W = solve_ridge(x[keep], Y[keep], lam, weights[keep])
    return np.array([exact_test_error(W[:, k], stars[k][0], s) for k in range(len(models))])


@dataclass
class EmpiricalTrace:
    """One realization of the bootstrapped mixing loop."""

    risk_sequence: np.ndarray
    quality_sequence: np.ndarray
    seed: int
    trial: int
    p2: float
    n: int
    extras: dict = field(default_factory=dict)


def iterative_mixing_sim(model: MixtureModel, d: int, n: int, p2: float, lam: float, steps: int,
                         seed: int, scenario: str = "iterate", trial: int = 0) -> EmpiricalTrace:
    """Refit on n1 fresh real rows mixed with n2 rows labelled by the previous fit.

    The first generation of synthetic labels comes from w2* = w1* + delta.  The
    returned quality sequence holds ||w_gen - w1*||^2_Sigma for the generator used at
    each step, so ``quality_sequence[t + 1] == risk_sequence[t]``.
    """
    if steps < 1:
        raise DomainError("steps must be at least 1")
    if d != model.d:
        raise DomainError("d does not match the model")
    n2 = int(round(p2 * n))
    n1 = n - n2
    s = model.sigma.eigenvalues
    w1, w_gen = draw_weights(model, seed, scenario, trial)
    risks = np.empty(steps)
    quality = np.empty(steps + 1)
    quality[0] = exact_test_error(w_gen, w1, s)
    for t in range(steps):
        x1 = gaussian_design(make_rng(seed, scenario, trial, "data_real", t + 1), n1, s)
        x2 = gaussian_design(make_rng(seed, scenario, trial, "data_syn", t + 1), n2, s)
        e1 = make_rng(seed, scenario, trial, "noise_real", t + 1).standard_normal(n1) * np.sqrt(model.noise1)
        e2 = make_rng(seed, scenario, trial, "noise_syn", t + 1).standard_normal(n2) * np.sqrt(model.noise2)
        x = np.vstack([x1, x2])
        y = np.concatenate([x1 @ w1 + e1, x2 @ w_gen + e2])
        w_gen = solve_ridge(x, y, lam, 1.0 / n)
        risks[t] = exact_test_error(w_gen, w1, s)
        quality[t + 1] = risks[t]
    return EmpiricalTrace(risks, quality, seed, trial, n2 / n, n)


# --------------------------------------------------------------------------- functionals


def _functional_trial(req, s1, s2, n1, n2, lam, rng_data1, rng_data2, S):
    n = n1 + n2
    d = s1.size
    x1 = gaussian_design(rng_data1, n1, s1)
    x2 = gaussian_design(rng_data2, n2, s2)
    M1 = x1.T @ x1 / n
    M2 = x2.T @ x2 / n
    M = M1 + M2
    A = req.a_matrix.eigenvalues
    B = None if req.b_matrix is None else req.b_matrix.eigenvalues
    if S is None:
        Q = linalg.inv(M + lam * np.eye(d))
        Q = 0.5 * (Q + Q.T)
    else:
        R = linalg.inv(S.T @ M @ S + lam * np.eye(S.shape[1]))
        Q = S @ R @ S.T
        Q = 0.5 * (Q + Q.T)
    Mj = M1 if req.source_index == 1 else M2
    AM = A[:, None] * Mj  # A M_j
    if req.kind == "r1":
        return float(np.sum(AM * Q.T))
    QBQ = Q @ (B[:, None] * Q)
    if req.kind == "r2":
        return float(np.sum(A * np.diag(QBQ)))
    if req.kind == "r3":
        return float(np.sum(AM * (QBQ @ Mj).T))
    if req.kind == "r4":
        return float(np.sum(AM * QBQ.T))
    return float(np.sum((A[:, None] * M1) * (QBQ @ M2).T))


def mc_functional(req, sigma1: Spectrum, sigma2: Spectrum, d: int, n1: int, n2: int, lam: float,
                  trials: int, seed: int, m: int | None = None,
                  scenario: str = "functional") -> tuple[float, float]:
    """Monte Carlo mean and standard error of a trace functional over ``trials`` draws."""
    check_same_dimension([sigma1, sigma2, req.a_matrix])
    if sigma1.d != d:
        raise DomainError("d does not match the spectra")
    if trials < 2:
        raise DomainError("need at least two trials for a standard error")
    if req.model_class == "projections" and m is None:
        raise DomainError("projections functionals need m")
    vals = np.empty(trials)
    for t in range(trials):
        S = None
        if req.model_class == "projections":
            S = draw_projection(d, m, seed, scenario, t)
        vals[t] = _functional_trial(
            req, sigma1.eigenvalues, sigma2.eigenvalues, n1, n2, lam,
            make_rng(seed, scenario, t, "data_real"), make_rng(seed, scenario, t, "data_syn"), S,
        )
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(trials))
