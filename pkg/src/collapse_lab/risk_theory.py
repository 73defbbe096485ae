"""Asymptotic test error of ridge and random-projection fits on real + synthetic data.

Every evaluator splits the error as ``total = bias + variance + collapse``, where
``collapse`` (zeta) is the extra term that only appears when a fraction p2 of the
training rows carries shifted labels.  Traces are unnormalized sums over the
eigenvalues, and the quality of the synthetic data is c2 = tr(Sigma Delta).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .fixed_point import (
    floor_lambda,
    is_near_threshold,
    solve_kappa,
    solve_rp_core,
    solve_u_omega,
)
from .spectra import MixtureModel, ScalingRatios, Spectrum

ZETA_OMEGA_COEFFS = ("p2sq", "p2")


@dataclass(frozen=True)
class RiskDecomposition:
    bias: float
    variance: float
    collapse: float
    flags: frozenset = frozenset()
    scalars: dict = field(default_factory=dict, compare=False)

    @property
    def total(self) -> float:
        return self.bias + self.variance + self.collapse

    def as_dict(self) -> dict:
        return {"B": self.bias, "V": self.variance, "zeta": self.collapse, "E": self.total}


def _n_from(model: MixtureModel, ratios: ScalingRatios, n: float | None) -> float:
    implied = model.d / ratios.phi
    if n is None:
        return implied
    if abs(n - implied) > 1e-9 * implied:
        raise DomainError(f"n={n} inconsistent with d/phi={implied}")
    return float(n)


def _flags(lam_floored: bool, near: bool) -> frozenset:
    out = set()
    if lam_floored:
        out.add("lambda_floored")
    if near:
        out.add("near_threshold")
    return frozenset(out)


def classical_risk(model: MixtureModel, ratios: ScalingRatios, lam: float,
                   n: float | None = None) -> RiskDecomposition:
    """Bias, variance and collapse of pooled ridge regression with a common covariance."""
    n = _n_from(model, ratios, n)
    lam, floored = floor_lambda(lam)
    fp = solve_kappa(model.sigma, n, lam)
    s, G, D = model.sigma.eigenvalues, model.gamma_prior.eigenvalues, model.delta.eigenvalues
    k, u = fp.kappa, fp.u
    p1, p2 = ratios.p1, ratios.p2
    res2 = (s + k) ** 2
    bias = k**2 * (1.0 + u) * np.sum(G * s / res2)
    variance = model.pooled_noise(ratios) * u
    collapse = (p2**2 * (1.0 + p1 * u) * np.sum(D * s**3 / res2)
                + p2 * u * np.sum(D * s * (p1 * s + k) ** 2 / res2))
    return RiskDecomposition(
        float(bias), float(variance), float(collapse), _flags(floored, False),
        {"kappa": k, "u": u, "df1": fp.df1, "df2": fp.df2, "lambda": lam, "method": fp.method},
    )


def rp_risk(model: MixtureModel, ratios: ScalingRatios, lam: float, n: float | None = None,
            zeta_omega_coeff: str = "p2sq") -> RiskDecomposition:
    """Bias, variance and collapse of ridge on random projections S^T x, S_ij ~ N(0, 1/d).

    With T = Sigma + theta::

        B    = (1+u) theta^2 tr Gamma Sigma T^-2 + omega' tr Gamma Sigma^2 T^-2
        V    = sigma^2 / (e n) * (tr Sigma^2 T^-2 + (omega' - theta u) tr Sigma T^-2)
        zeta = p2^2 (1 + p1 u) tr Delta Sigma^3 T^-2 + c omega' tr Delta Sigma^2 T^-2
               + p2 u tr Delta Sigma (p1 Sigma + theta)^2 T^-2

    ``zeta_omega_coeff`` selects c: ``"p2sq"`` (p2^2, what the functional expansion gives
    and what simulation supports) or ``"p2"``.
    """
    if zeta_omega_coeff not in ZETA_OMEGA_COEFFS:
        raise DomainError(f"zeta_omega_coeff must be one of {ZETA_OMEGA_COEFFS}")
    n = _n_from(model, ratios, n)
    lam, floored = floor_lambda(lam)
    core = solve_rp_core(model.sigma, ratios, lam)
    fp = solve_u_omega(model.sigma, ratios, lam, core, cross_check=False)
    s, G, D = model.sigma.eigenvalues, model.gamma_prior.eigenvalues, model.delta.eigenvalues
    th, u, wp, e = fp.theta, fp.u, fp.omega_prime, fp.e
    p1, p2 = ratios.p1, ratios.p2
    T2 = (s + th) ** 2
    bias = (1.0 + u) * th**2 * np.sum(G * s / T2) + wp * np.sum(G * s**2 / T2)
    bracket = np.sum(s**2 / T2) + (wp - th * u) * np.sum(s / T2)
    variance = model.pooled_noise(ratios) / (e * n) * bracket
    c = p2**2 if zeta_omega_coeff == "p2sq" else p2
    collapse = (p2**2 * (1.0 + p1 * u) * np.sum(D * s**3 / T2)
                + c * wp * np.sum(D * s**2 / T2)
                + p2 * u * np.sum(D * s * (p1 * s + th) ** 2 / T2))
    return RiskDecomposition(
        float(bias), float(max(variance, 0.0)), float(collapse),
        _flags(floored, is_near_threshold(ratios.psi, lam)),
        {"e": e, "tau": fp.tau, "theta": th, "u": u, "omega": fp.omega, "omega_prime": wp,
         "lambda": lam, "method": fp.method, "zeta_omega_coeff": zeta_omega_coeff},
    )


# --------------------------------------------------------------------------- isotropic closed forms


def isotropic_under_risk(phi: float, p2: float, sigma2: float, c2: float) -> RiskDecomposition:
    """Ridgeless isotropic risk for phi < 1: sigma^2 phi/(1-phi) + (p2^2 + p2 p1 phi/(1-phi)) c2."""
    if not 0 < phi < 1:
        raise DomainError("isotropic_under_risk needs 0 < phi < 1 (use isotropic_over_risk)")
    _check_p2(p2)
    p1 = 1.0 - p2
    r = phi / (1.0 - phi)
    return RiskDecomposition(0.0, sigma2 * r, (p2**2 + p2 * p1 * r) * c2)


def isotropic_over_risk(phi: float, p2: float, sigma2: float, c2: float, r2: float,
                        collapse_form: str = "general") -> RiskDecomposition:
    """Ridgeless isotropic risk for phi > 1 (more features than samples).

    B = r2 (1 - 1/phi) and V = sigma^2 / (phi - 1).  The collapse term has two forms:

    ``"general"``   p2 c2 (phi - p2) / (phi (phi - 1)), the lambda -> 0 limit of
                    :func:`classical_risk` with kappa = phi - 1 and u = 1/(phi - 1);
                    simulation agrees with it.
    ``"shifted_u"`` (p2 c2 / phi^2) (p2 (phi - p2)/(phi - 1) + (phi - p2)^2), the
                    commonly quoted closed form, which substitutes phi/(phi - 1)
                    (that is, 1 + u) for u.  Both agree at phi = 2, p2 = 1.
    """
    if not phi > 1:
        raise DomainError("isotropic_over_risk needs phi > 1 (use isotropic_under_risk)")
    _check_p2(p2)
    bias = r2 * (1.0 - 1.0 / phi)
    variance = sigma2 / (phi - 1.0)
    if collapse_form == "general":
        collapse = p2 * c2 * (phi - p2) / (phi * (phi - 1.0))
    elif collapse_form == "shifted_u":
        collapse = (p2 * c2 / phi**2) * (p2 * (phi - p2) / (phi - 1.0) + (phi - p2) ** 2)
    else:
        raise DomainError("collapse_form must be 'general' or 'shifted_u'")
    return RiskDecomposition(bias, variance, collapse)


def _check_p2(p2):
    if not 0.0 <= p2 <= 1.0:
        raise DomainError("p2 must lie in [0, 1]")


# --------------------------------------------------------------------------- weighted mixing


def _check_alpha(alpha):
    a = np.asarray(alpha, dtype=float)
    if np.any((a < 0) | (a > 1)):
        raise DomainError("alpha must lie in [0, 1]")
    return a


def weighted_mixing_risk(alpha, phi: float, p2: float, sigma1sq: float, sigma2sq: float, c2: float):
    """Small-phi risk of the alpha-weighted fit in its commonly stated simplified form.

    p2^2 alpha^2 c2 + ((1 - alpha) p1 sigma1^2 + alpha p2 sigma2^2) phi; vectorized in alpha.
    """
    a = _check_alpha(alpha)
    _check_p2(p2)
    p1 = 1.0 - p2
    out = p2**2 * a**2 * c2 + ((1.0 - a) * p1 * sigma1sq + a * p2 * sigma2sq) * phi
    return float(out) if out.ndim == 0 else out


def weighted_mixing_risk_exact(alpha, phi: float, p2: float, sigma1sq: float, sigma2sq: float, c2: float):
    """Leading-order risk of the alpha-weighted fit from its normal equations.

    The fit converges to (1 - alpha) w1* + alpha w2*, giving the bias alpha^2 c2; each
    row's noise enters with its squared loss weight, giving
    phi ((1 - alpha)^2 sigma1^2 / p1 + alpha^2 sigma2^2 / p2).  At alpha = p2 this is
    the pooled-fit risk sigma^2 phi + p2^2 c2.
    """
    a = _check_alpha(alpha)
    _check_p2(p2)
    p1 = 1.0 - p2
    noise = np.zeros_like(a)
    if p1 > 0:
        noise = noise + (1.0 - a) ** 2 * sigma1sq / p1
    elif np.any(a < 1):
        raise DomainError("no real rows: only alpha = 1 is defined")
    if p2 > 0:
        noise = noise + a**2 * sigma2sq / p2
    elif np.any(a > 0):
        raise DomainError("no synthetic rows: only alpha = 0 is defined")
    out = a**2 * c2 + phi * noise
    return float(out) if out.ndim == 0 else out


def weighted_mixing_theory(model: MixtureModel, ratios: ScalingRatios, alpha: float,
                           lam: float) -> RiskDecomposition:
    """Full deterministic-equivalent risk of the alpha-weighted ridge fit.

    Scaling the rows of each source by the square root of its loss weight turns the
    weighted fit into pooled ridge with covariances (1-alpha) Sigma / p1 and
    alpha Sigma / p2 and noise variances scaled the same way, tested against Sigma.
    """
    from .detequiv import FunctionalRequest, classical_terms
    from .fixed_point import solve_general_classical

    a = float(_check_alpha(alpha))
    p1, p2 = ratios.p1, ratios.p2
    if p1 == 0 and a < 1 or p2 == 0 and a > 0:
        raise DomainError("a source with positive weight has no samples")
    c1 = (1.0 - a) / p1 if p1 > 0 else 0.0
    c2w = a / p2 if p2 > 0 else 0.0
    sigma = model.sigma
    s1 = Spectrum(c1 * sigma.eigenvalues, "generic")
    s2 = Spectrum(c2w * sigma.eigenvalues, "generic")
    lam, floored = floor_lambda(lam)
    st = solve_general_classical(s1, s2, ratios, lam, sigma)
    d = sigma.d
    n = d / ratios.phi
    ident = Spectrum.identity(d, role_tag="generic")

    def f(kind, A, j=1):
        return classical_terms(FunctionalRequest(kind, A, sigma, j, "classical"), st, s1.eigenvalues,
                               s2.eigenvalues)

    bias = lam**2 * f("r2", model.gamma_prior)
    variance = (c1 * model.noise1 * f("r4", ident, 1) + c2w * model.noise2 * f("r4", ident, 2)) / n
    collapse = f("r3", model.delta, 2) if p2 > 0 else 0.0
    return RiskDecomposition(float(bias), float(variance), float(collapse), _flags(floored, False),
                             {"e1": st.e1, "e2": st.e2, "u1": st.u1, "u2": st.u2, "lambda": lam})


@dataclass(frozen=True)
class MixingWeight:
    """Optimal synthetic weight.

    ``alpha_star`` is the grid argmin of :func:`weighted_mixing_risk`; ``alpha`` is the
    displayed closed form (None when c2 = 0).  The stationary point of that simplified
    risk and the argmin of the exact leading-order risk are attached for comparison.
    """

    alpha: float | None
    alpha_star: float
    alpha_stationary: float | None
    alpha_exact: float
    grid_step: float = 1e-3


def optimal_mixing_weight(phi: float, p2: float, sigma1sq: float, sigma2sq: float, c2: float,
                          grid_step: float = 1e-3) -> MixingWeight:
    _check_p2(p2)
    p1 = 1.0 - p2
    grid = np.linspace(0.0, 1.0, int(round(1.0 / grid_step)) + 1)
    alpha_star = float(grid[np.argmin(weighted_mixing_risk(grid, phi, p2, sigma1sq, sigma2sq, c2))])
    alpha_exact = float(grid[np.argmin(weighted_mixing_risk_exact(grid, phi, p2, sigma1sq, sigma2sq, c2))])
    if c2 > 0:
        displayed = float(np.clip(1.0 - (p1 * sigma1sq - p2 * sigma2sq) * phi / (2.0 * c2), 0.0, 1.0))
        stationary = None
        if p2 > 0:
            stationary = float(np.clip((p1 * sigma1sq - p2 * sigma2sq) * phi / (2.0 * p2**2 * c2), 0.0, 1.0))
    else:
        displayed = stationary = None
    return MixingWeight(displayed, alpha_star, stationary, alpha_exact, grid_step)


# --------------------------------------------------------------------------- iterative mixing


@dataclass(frozen=True)
class IterativeTrace:
    """Quality c_t^2 for t = 0..steps and the risk E^(t) = c_t^2 of the model fitted at step t >= 1."""

    quality_sequence: np.ndarray
    risk_sequence: np.ndarray
    baseline: float
    closed_form: np.ndarray
    p2: float

    @property
    def max_closed_form_gap(self) -> float:
        return float(np.max(np.abs(self.quality_sequence - self.closed_form)))

    @property
    def limit(self) -> float:
        """Fixed point baseline / (1 - p2^2) of the recursion (inf when p2 = 1)."""
        return np.inf if self.p2 >= 1 else self.baseline / (1.0 - self.p2**2)


def mixing_baseline(sigma2: float, phi: float, approx: bool = False) -> float:
    """Clean-data risk sigma^2 phi/(1-phi), or its small-phi form sigma^2 phi."""
    if approx:
        return sigma2 * phi
    if not 0 < phi < 1:
        raise DomainError("the exact baseline needs 0 < phi < 1")
    return sigma2 * phi / (1.0 - phi)


def iterative_closed_form(c0sq: float, p2: float, baseline: float, t) -> np.ndarray:
    """p2^(2t) c0^2 + (1 - p2^(2t)) / (1 - p2^2) * baseline, with the p2 = 1 limit c0^2 + t baseline."""
    t = np.asarray(t, dtype=float)
    q = p2**2
    if q == 1.0:
        return c0sq + t * baseline
    qt = q**t
    return qt * c0sq + (1.0 - qt) / (1.0 - q) * baseline


def iterative_mixing(c0sq: float, p2: float, sigma2: float, phi: float, steps: int,
                     approx_baseline: bool = False) -> IterativeTrace:
    """Run c_{t+1}^2 = baseline + p2^2 c_t^2 and check each step against the closed form."""
    if steps < 0:
        raise DomainError("steps must be non-negative")
    if c0sq < 0:
        raise DomainError("c0sq must be non-negative")
    _check_p2(p2)
    base = mixing_baseline(sigma2, phi, approx_baseline)
    q = np.empty(steps + 1)
    q[0] = c0sq
    for t in range(steps):
        q[t + 1] = base + p2**2 * q[t]
    closed = iterative_closed_form(c0sq, p2, base, np.arange(steps + 1))
    gap = np.abs(q - closed)
    tol = 1e-12 * np.maximum(1.0, np.abs(closed))
    if np.any(gap > tol):
        bad = int(np.argmax(gap > tol))
        raise ArithmeticError(f"recursion and closed form disagree at t={bad}: {gap[bad]:.3e}")
    return IterativeTrace(q, q[1:].copy(), base, closed, p2)
