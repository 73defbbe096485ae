"""Self-consistency equations behind the asymptotic risk formulas.

Scalar and low-dimensional fixed points are solved by damped Picard iteration
(damping 0.5, relative tolerance 1e-12).  Whenever an iteration stalls, a
bracketed root finder on an equivalent scalar equation takes over; the
``method`` field of each result records which path produced it.

Notation for a diagonal covariance ``Sigma`` with eigenvalues ``lam``::

    df_k(t)    = sum lam^k / (lam + t)^k
    I_{k,l}(t) = mean lam^k / (lam + t)^l
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import DomainError, SolverError, ThresholdError
from .spectra import ScalingRatios, Spectrum, check_same_dimension, spectral_moment

LAMBDA_FLOOR = 1e-8
DAMPING = 0.5
RTOL = 1e-12
MAX_ITER = 100_000
RESIDUAL_TOL = 1e-10
NEAR_THRESHOLD_PSI = 0.01
NEAR_THRESHOLD_LAMBDA = 1e-6


def floor_lambda(lam: float) -> tuple[float, bool]:
    """Map a ridgeless request onto the positive floor; returns (lambda, floored)."""
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    if lam == 0:
        return LAMBDA_FLOOR, True
    return float(lam), False


def is_near_threshold(psi: float | None, lam: float) -> bool:
    return psi is not None and abs(psi - 1.0) < NEAR_THRESHOLD_PSI and lam < NEAR_THRESHOLD_LAMBDA


@dataclass
class PicardResult:
    x: np.ndarray
    iterations: int
    converged: bool
    step: float


def damped_picard(update: Callable[[np.ndarray], np.ndarray], x0, damping: float = DAMPING,
                  rtol: float = RTOL, max_iter: int = MAX_ITER, stall_check: bool = True) -> PicardResult:
    """Iterate ``x <- (1 - damping) x + damping update(x)`` until the relative step is below rtol.

    With ``stall_check`` the loop gives up early once the observed contraction rate
    says the tolerance cannot be reached inside the remaining budget.
    """
    x = np.array(x0, dtype=float)
    prev_step = None
    step = math.inf
    for it in range(1, max_iter + 1):
        x_new = (1.0 - damping) * x + damping * np.asarray(update(x), dtype=float)
        if not np.all(np.isfinite(x_new)):
            return PicardResult(x, it, False, math.inf)
        scale = np.maximum(np.abs(x_new), 1e-300)
        step = float(np.max(np.abs(x_new - x) / scale))
        x = x_new
        if step <= rtol:
            return PicardResult(x, it, True, step)
        if stall_check and it % 200 == 0:
            if prev_step is not None and prev_step > 0:
                # per-iteration contraction over the last 200 steps
                rate = (step / prev_step) ** (1.0 / 200)
                if rate >= 1.0:
                    return PicardResult(x, it, False, step)
                needed = math.log(rtol / step) / math.log(rate) if rate > 0 else 0.0
                if needed > max_iter - it:
                    return PicardResult(x, it, False, step)
            prev_step = step
    return PicardResult(x, max_iter, False, step)


# --------------------------------------------------------------------------- classical


@dataclass(frozen=True)
class ClassicalFixedPoint:
    kappa: float
    u: float
    df1: float
    df2: float
    n: float
    lam: float
    iterations: int = 0
    method: str = "picard"
    lambda_floored: bool = False

    @property
    def residual(self) -> float:
        """Relative residual of kappa - lambda - kappa df1(kappa)/n."""
        return abs(self.kappa - self.lam - self.kappa * self.df1 / self.n) / self.kappa


def _kappa_map(lam_vals: np.ndarray, n: float, lam: float):
    def g(x):
        k = x[0]
        return np.array([lam + k * np.sum(lam_vals / (lam_vals + k)) / n])
    return g


def solve_kappa(sigma: Spectrum, n: float, lam: float, max_iter: int = MAX_ITER) -> ClassicalFixedPoint:
    """Unique positive root of kappa - lambda = kappa df1(kappa)/n, plus u = (df2/n)/(1 - df2/n)."""
    if n <= 0:
        raise DomainError("n must be positive")
    lam, floored = floor_lambda(lam)
    vals = sigma.eigenvalues
    k0 = lam + sigma.trace / n
    res = damped_picard(_kappa_map(vals, n, lam), [k0], max_iter=max_iter)
    kappa, method, iters = float(res.x[0]), "picard", res.iterations

    def f(k):
        return k - lam - k * np.sum(vals / (vals + k)) / n

    if not res.converged:
        # f(lam) < 0 <= f(lam + tr Sigma / n), since k df1(k) <= tr Sigma
        lo, hi = lam, k0
        if f(hi) < 0:
            raise SolverError("kappa bracket failed", abs(f(hi)), iters)
        kappa = optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        method = "brentq"
    # Newton polish; f'(k) = 1 - df2(k)/n
    for _ in range(3):
        fk = f(kappa)
        fp = 1.0 - spectral_moment(vals, 2, 2, kappa) / n
        if fp <= 0:
            break
        cand = kappa - fk / fp
        if cand > 0 and abs(f(cand)) < abs(fk):
            kappa = cand
        else:
            break
    df1 = spectral_moment(vals, 1, 1, kappa)
    df2 = spectral_moment(vals, 2, 2, kappa)
    if not df2 / n < 1:
        from .errors import DegenerateVarianceError
        raise DegenerateVarianceError(f"df2(kappa)/n = {df2 / n:.6g} >= 1")
    out = ClassicalFixedPoint(kappa, (df2 / n) / (1 - df2 / n), df1, df2, n, lam, iters, method, floored)
    if out.residual > RESIDUAL_TOL:
        raise SolverError("kappa residual above tolerance", out.residual, iters)
    return out


# --------------------------------------------------------------------------- random projections


@dataclass(frozen=True)
class RPCore:
    e: float
    tau: float
    theta: float
    lam: float
    iterations: int = 0
    method: str = "picard"


@dataclass(frozen=True)
class RPFixedPoint:
    e: float
    tau: float
    u: float
    omega: float
    theta: float
    omega_prime: float
    lam: float
    phi: float
    gamma: float
    method: str = "picard"
    picard_u: float | None = None
    picard_omega_prime: float | None = None
    near_threshold: bool = False
    lambda_floored: bool = False

    @property
    def psi(self) -> float:
        return self.phi * self.gamma

    @property
    def chi(self) -> float:
        return self.lam / self.tau

    @property
    def kappa(self) -> float:
        return self.lam / self.e


def _rp_ratios(ratios: ScalingRatios) -> tuple[float, float, float]:
    if not ratios.has_projection:
        raise DomainError("random-projection solvers need gamma (or psi) in the scaling ratios")
    return ratios.phi, ratios.gamma, ratios.psi


def rp_core_residuals(sigma: Spectrum, ratios: ScalingRatios, lam: float, e: float, tau: float):
    """Residuals of e (1 + psi tau trbar Sigma K^-1) = 1 and tau (1 + trbar K0 K^-1) = 1."""
    phi, gamma, psi = _rp_ratios(ratios)
    s = sigma.eigenvalues
    K = gamma * tau * e * s + lam
    r_e = e * (1.0 + psi * tau * np.mean(s / K)) - 1.0
    r_tau = tau * (1.0 + np.mean(e * s / K)) - 1.0
    return abs(r_e), abs(r_tau)


def _theta_equation(s: np.ndarray, phi: float, gamma: float):
    """With eta = I_{1,1}(theta): lambda = theta (gamma - eta) (1 - phi eta)."""
    def parts(theta):
        eta = float(np.mean(s / (s + theta)))
        return eta, gamma - eta, 1.0 - phi * eta
    return parts


def theta_lower_bound(sigma: Spectrum, phi: float, gamma: float) -> float:
    """Smallest theta with I_{1,1}(theta) <= min(gamma, 1/phi); 0 when that bound is >= 1."""
    s = sigma.eigenvalues
    target = min(gamma, 1.0 / phi)
    if target >= 1.0:
        return 0.0

    def h(t):
        return np.mean(s / (s + t)) - target

    hi = float(np.max(s))
    while h(hi) > 0:
        hi *= 2.0
    return optimize.brentq(h, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_theta_scalar(sigma: Spectrum, ratios: ScalingRatios, lam: float) -> RPCore:
    """Solve the (e, tau) system through its one-dimensional reduction in theta."""
    phi, gamma, psi = _rp_ratios(ratios)
    s = sigma.eigenvalues
    parts = _theta_equation(s, phi, gamma)

    def g(theta):
        _, a, b = parts(theta)
        return theta * a * b - lam

    lo = theta_lower_bound(sigma, phi, gamma)
    hi = max(lo, lam, 1e-300) * 2.0 + lam / max(gamma, 1e-300)
    while g(hi) <= 0:
        hi *= 2.0
    theta = optimize.brentq(g, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)
    return _core_from_theta(s, phi, gamma, lam, theta, 0, "theta-brentq")


def _core_from_theta(s, phi, gamma, lam, theta, iterations, method) -> RPCore:
    eta = float(np.mean(s / (s + theta)))
    a = 1.0 - eta / gamma
    b = 1.0 - phi * eta
    # recover whichever factor is tiny from lambda = gamma theta tau e to avoid cancellation
    if a < b:
        e = b
        tau = lam / (gamma * theta * e)
    else:
        tau = a
        e = lam / (gamma * theta * tau)
    return RPCore(e, tau, theta, lam, iterations, method)


def solve_rp_core(sigma: Spectrum, ratios: ScalingRatios, lam: float,
                  max_iter: int = MAX_ITER) -> RPCore:
    """Positive solution (e, tau) of the projection fixed point and theta = lambda/(gamma tau e)."""
    phi, gamma, psi = _rp_ratios(ratios)
    lam, _ = floor_lambda(lam)
    s = sigma.eigenvalues

    def update(x):
        e, tau = x
        K = gamma * tau * e * s + lam
        e_new = 1.0 / (1.0 + psi * tau * np.mean(s / K))
        K = gamma * tau * e_new * s + lam
        tau_new = 1.0 / (1.0 + np.mean(e_new * s / K))
        return np.array([e_new, tau_new])

    res = damped_picard(update, [1.0, 1.0], max_iter=max_iter)
    if res.converged:
        e, tau = (float(v) for v in res.x)
        core = RPCore(e, tau, lam / (gamma * tau * e), lam, res.iterations, "picard")
        if max(rp_core_residuals(sigma, ratios, lam, e, tau)) <= RESIDUAL_TOL:
            return core
    core = solve_theta_scalar(sigma, ratios, lam)
    r = max(rp_core_residuals(sigma, ratios, lam, core.e, core.tau))
    if not r <= RESIDUAL_TOL:
        raise SolverError("(e, tau) fixed point did not converge", r, res.iterations)
    return RPCore(core.e, core.tau, core.theta, lam, res.iterations, core.method)


def u_omega_system(sigma: Spectrum, phi: float, gamma: float, theta: float):
    """Coefficients of the 2x2 linear system in (u, omega') and its determinant.

    u = phi I22 (1+u) + phi I12 w,   gamma w = I22 w + theta^2 I12 (1+u)
    """
    i22 = spectral_moment(sigma, 2, 2, theta, normalized=True)
    i12 = spectral_moment(sigma, 1, 2, theta, normalized=True)
    z = i22 * (gamma - i22) + theta**2 * i12**2
    det = gamma - phi * z - i22
    return i22, i12, z, det


def solve_u_omega(sigma: Spectrum, ratios: ScalingRatios, lam: float, core: RPCore | None = None,
                  cross_check: bool = True, max_iter: int = MAX_ITER) -> RPFixedPoint:
    """Solve for (u, omega') exactly from the linear system; optionally cross-check by Picard."""
    phi, gamma, psi = _rp_ratios(ratios)
    lam, floored = floor_lambda(lam)
    if core is None:
        core = solve_rp_core(sigma, ratios, lam)
    e, tau, theta = core.e, core.tau, core.theta
    i22, i12, z, det = u_omega_system(sigma, phi, gamma, theta)
    if abs(det) < 1e-14:
        raise ThresholdError("singular (u, omega') system at the interpolation threshold", psi)
    u = phi * z / det
    omega_prime = theta**2 * i12 / det
    picard_u = picard_w = None
    if cross_check:
        pu = picard_u_omega(sigma, ratios, lam, core, max_iter=max_iter)
        if pu is not None:
            picard_u, picard_w = pu
    return RPFixedPoint(
        e=e, tau=tau, u=u, omega=gamma * tau**2 * omega_prime, theta=theta,
        omega_prime=omega_prime, lam=lam, phi=phi, gamma=gamma, method=core.method,
        picard_u=picard_u, picard_omega_prime=picard_w,
        near_threshold=is_near_threshold(psi, lam), lambda_floored=floored,
    )


def picard_u_omega(sigma: Spectrum, ratios: ScalingRatios, lam: float, core: RPCore,
                   max_iter: int = MAX_ITER):
    """Damped Picard on the defining (u, omega) equations; returns (u, omega') or None."""
    phi, gamma, psi = _rp_ratios(ratios)
    s = sigma.eigenvalues
    e, tau = core.e, core.tau
    K = gamma * tau * e * s + lam
    K2 = K**2
    a_uu = psi * e**2 * gamma * tau**2 * np.mean(s**2 / K2)
    a_uw = psi * e**2 * np.mean(s / K2)
    a_ww = tau**2 * gamma * e**2 * np.mean(s**2 / K2)
    a_wu = tau**2 * lam**2 * np.mean(s / K2)

    def update(x):
        u, w = x
        return np.array([a_uu * (1.0 + u) + a_uw * w, a_ww * w + a_wu * (1.0 + u)])

    res = damped_picard(update, [0.0, 0.0], max_iter=max_iter)
    if not res.converged:
        return None
    u, w = res.x
    return float(u), float(w / (gamma * tau**2))


def rp_fixed_point_residuals(sigma: Spectrum, ratios: ScalingRatios, fp: RPFixedPoint) -> dict:
    """Relative residuals of every defining equation at a solved projection state."""
    phi, gamma, psi = _rp_ratios(ratios)
    s = sigma.eigenvalues
    r_e, r_tau = rp_core_residuals(sigma, ratios, fp.lam, fp.e, fp.tau)
    i22, i12, _, _ = u_omega_system(sigma, phi, gamma, fp.theta)
    u, w = fp.u, fp.omega_prime
    r_u = abs(u - phi * i22 * (1 + u) - phi * i12 * w) / max(1.0, abs(u))
    r_w = abs(gamma * w - i22 * w - fp.theta**2 * i12 * (1 + u)) / max(1.0, abs(gamma * w))
    return {"e": r_e, "tau": r_tau, "u": r_u, "omega_prime": r_w}


def omega_prime_variants(sigma: Spectrum, ratios: ScalingRatios, lam: float) -> dict:
    """Compare the two printed closed forms of omega' against the Picard solution.

    ``elimination`` uses theta^2 I12 in the numerator (what Cramer's rule gives);
    ``displayed`` uses theta^2 I22.
    """
    phi, gamma, psi = _rp_ratios(ratios)
    lam, _ = floor_lambda(lam)
    core = solve_rp_core(sigma, ratios, lam)
    i22, i12, z, det = u_omega_system(sigma, phi, gamma, core.theta)
    elimination = core.theta**2 * i12 / det
    displayed = core.theta**2 * i22 / det
    picard = picard_u_omega(sigma, ratios, lam, core)
    ref = None if picard is None else picard[1]

    def rel(a):
        return None if ref is None else abs(a - ref) / max(abs(ref), 1e-300)

    err_elim, err_disp = rel(elimination), rel(displayed)
    if ref is None:
        match = "undetermined"
    elif err_elim <= 1e-8 and (err_disp is None or err_disp > 1e-8):
        match = "elimination"
    elif err_disp <= 1e-8 and err_elim > 1e-8:
        match = "displayed"
    elif err_elim <= 1e-8 and err_disp <= 1e-8:
        match = "both"
    else:
        match = "neither"
    return {
        "theta": core.theta, "omega_prime_elimination": elimination,
        "omega_prime_displayed": displayed, "omega_prime_picard": ref,
        "rel_err_elimination": err_elim, "rel_err_displayed": err_disp, "match": match,
    }


# --------------------------------------------------------------------------- two covariances


@dataclass(frozen=True)
class GeneralEquivalentsState:
    """Solved scalars for two (possibly different) covariances Sigma_1, Sigma_2.

    ``u1, u2`` multiply the covariances in L' = p1 u1 Sigma_1 + p2 u2 Sigma_2 + B; for the
    projection variant ``tau`` and ``omega`` are filled and ``v_j = lambda u_j``.
    """

    e1: float
    e2: float
    u1: float
    u2: float
    lam: float
    phi: float
    p2: float
    tau: float | None = None
    omega: float | None = None
    gamma: float | None = None
    iterations: int = 0
    method: str = "picard"

    @property
    def p1(self) -> float:
        return 1.0 - self.p2

    @property
    def v1(self) -> float:
        return self.lam * self.u1

    @property
    def v2(self) -> float:
        return self.lam * self.u2


def _e_classical_update(s1, s2, p1, p2, phi, lam):
    def update(x):
        e1, e2 = x
        K = p1 * e1 * s1 + p2 * e2 * s2 + lam
        e1n = 1.0 / (1.0 + phi * np.mean(s1 / K))
        K = p1 * e1n * s1 + p2 * e2 * s2 + lam
        e2n = 1.0 / (1.0 + phi * np.mean(s2 / K))
        return np.array([e1n, e2n])
    return update


def solve_general_classical(sigma1: Spectrum, sigma2: Spectrum, ratios: ScalingRatios, lam: float,
                            b_matrix: Spectrum | None = None,
                            max_iter: int = MAX_ITER) -> GeneralEquivalentsState:
    """(e1, e2) by damped alternating iteration, then (u1, u2) from their 2x2 linear system."""
    check_same_dimension([sigma1, sigma2] + ([b_matrix] if b_matrix is not None else []))
    lam, _ = floor_lambda(lam)
    s1, s2 = sigma1.eigenvalues, sigma2.eigenvalues
    B = s1 if b_matrix is None else b_matrix.eigenvalues
    p1, p2, phi = ratios.p1, ratios.p2, ratios.phi
    res = damped_picard(_e_classical_update(s1, s2, p1, p2, phi, lam), [1.0, 1.0], max_iter=max_iter)
    method = "picard"
    e = res.x
    if not res.converged or max(classical_e_residuals(s1, s2, p1, p2, phi, lam, *e)) > RESIDUAL_TOL:
        e = _root_fallback(lambda x: x - _e_classical_update(s1, s2, p1, p2, phi, lam)(x), res.x, res.iterations)
        method = "hybr"
    e1, e2 = (float(v) for v in e)
    K2 = (p1 * e1 * s1 + p2 * e2 * s2 + lam) ** 2
    es = (e1, e2)
    ss = (s1, s2)
    ps = (p1, p2)
    A = np.eye(2)
    rhs = np.zeros(2)
    for j in range(2):
        pre = phi * es[j] ** 2
        for k in range(2):
            A[j, k] -= pre * ps[k] * np.mean(ss[j] * ss[k] / K2)
        rhs[j] = pre * np.mean(ss[j] * B / K2)
    u1, u2 = np.linalg.solve(A, rhs)
    return GeneralEquivalentsState(e1, e2, float(u1), float(u2), lam, phi, ratios.p2,
                                   iterations=res.iterations, method=method)


def classical_e_residuals(s1, s2, p1, p2, phi, lam, e1, e2):
    K = p1 * e1 * s1 + p2 * e2 * s2 + lam
    return (abs(e1 * (1.0 + phi * np.mean(s1 / K)) - 1.0),
            abs(e2 * (1.0 + phi * np.mean(s2 / K)) - 1.0))


def general_classical_residuals(sigma1, sigma2, ratios, state: GeneralEquivalentsState,
                                b_matrix: Spectrum | None = None) -> dict:
    s1, s2 = sigma1.eigenvalues, sigma2.eigenvalues
    B = s1 if b_matrix is None else b_matrix.eigenvalues
    p1, p2, phi, lam = ratios.p1, ratios.p2, ratios.phi, state.lam
    r1, r2 = classical_e_residuals(s1, s2, p1, p2, phi, lam, state.e1, state.e2)
    K2 = (p1 * state.e1 * s1 + p2 * state.e2 * s2 + lam) ** 2
    L = p1 * state.u1 * s1 + p2 * state.u2 * s2 + B
    ru1 = abs(state.u1 - phi * state.e1**2 * np.mean(s1 * L / K2)) / max(1.0, abs(state.u1))
    ru2 = abs(state.u2 - phi * state.e2**2 * np.mean(s2 * L / K2)) / max(1.0, abs(state.u2))
    return {"e1": r1, "e2": r2, "u1": ru1, "u2": ru2}


def _root_fallback(fun, x0, iterations):
    sol = optimize.root(fun, x0, method="hybr", options={"xtol": 1e-14})
    r = float(np.max(np.abs(fun(sol.x))))
    if not sol.success and r > RESIDUAL_TOL:
        raise SolverError("fixed point did not converge", r, iterations)
    return sol.x


def _e_tau_update(s1, s2, p1, p2, psi, gamma, lam):
    def update(x):
        e1, e2, tau = x
        K = gamma * tau * (p1 * e1 * s1 + p2 * e2 * s2) + lam
        e1 = 1.0 / (1.0 + psi * tau * np.mean(s1 / K))
        K = gamma * tau * (p1 * e1 * s1 + p2 * e2 * s2) + lam
        e2 = 1.0 / (1.0 + psi * tau * np.mean(s2 / K))
        K0 = p1 * e1 * s1 + p2 * e2 * s2
        K = gamma * tau * K0 + lam
        tau = 1.0 / (1.0 + np.mean(K0 / K))
        return np.array([e1, e2, tau])
    return update


def projection_core_residuals(s1, s2, p1, p2, psi, gamma, lam, e1, e2, tau):
    K0 = p1 * e1 * s1 + p2 * e2 * s2
    K = gamma * tau * K0 + lam
    return (abs(e1 * (1.0 + psi * tau * np.mean(s1 / K)) - 1.0),
            abs(e2 * (1.0 + psi * tau * np.mean(s2 / K)) - 1.0),
            abs(tau * (1.0 + np.mean(K0 / K)) - 1.0))


def solve_general_projections(sigma1: Spectrum, sigma2: Spectrum, ratios: ScalingRatios, lam: float,
                              b_matrix: Spectrum | None = None,
                              max_iter: int = MAX_ITER) -> GeneralEquivalentsState:
    """(e1, e2, tau) by damped iteration, then (u1, u2, omega) from a 3x3 linear system.

    The second group solves
    u_j   = psi e_j^2 trbar Sigma_j (gamma tau^2 L' + omega) K^-2,
    omega = tau^2 trbar (gamma omega K0^2 + lambda^2 L') K^-2,
    with L' = p1 u1 Sigma_1 + p2 u2 Sigma_2 + B.
    """
    check_same_dimension([sigma1, sigma2] + ([b_matrix] if b_matrix is not None else []))
    phi, gamma, psi = _rp_ratios(ratios)
    lam, _ = floor_lambda(lam)
    s1, s2 = sigma1.eigenvalues, sigma2.eigenvalues
    B = s1 if b_matrix is None else b_matrix.eigenvalues
    p1, p2 = ratios.p1, ratios.p2
    upd = _e_tau_update(s1, s2, p1, p2, psi, gamma, lam)
    res = damped_picard(upd, [1.0, 1.0, 1.0], max_iter=max_iter)
    x, method = res.x, "picard"
    if not res.converged or max(projection_core_residuals(s1, s2, p1, p2, psi, gamma, lam, *x)) > RESIDUAL_TOL:
        x = _root_fallback(lambda y: y - upd(y), res.x, res.iterations)
        method = "hybr"
    e1, e2, tau = (float(v) for v in x)
    K0 = p1 * e1 * s1 + p2 * e2 * s2
    K2 = (gamma * tau * K0 + lam) ** 2
    es, ss, ps = (e1, e2), (s1, s2), (p1, p2)
    A = np.eye(3)
    rhs = np.zeros(3)
    for j in range(2):
        pre = psi * es[j] ** 2
        for k in range(2):
            A[j, k] -= pre * gamma * tau**2 * ps[k] * np.mean(ss[j] * ss[k] / K2)
        A[j, 2] -= pre * np.mean(ss[j] / K2)
        rhs[j] = pre * gamma * tau**2 * np.mean(ss[j] * B / K2)
    A[2, 2] -= tau**2 * gamma * np.mean(K0**2 / K2)
    for k in range(2):
        A[2, k] -= tau**2 * lam**2 * ps[k] * np.mean(ss[k] / K2)
    rhs[2] = tau**2 * lam**2 * np.mean(B / K2)
    u1, u2, omega = np.linalg.solve(A, rhs)
    return GeneralEquivalentsState(e1, e2, float(u1), float(u2), lam, phi, p2, tau=tau,
                                   omega=float(omega), gamma=gamma, iterations=res.iterations,
                                   method=method)


def general_projection_residuals(sigma1, sigma2, ratios, state: GeneralEquivalentsState,
                                 b_matrix: Spectrum | None = None) -> dict:
    phi, gamma, psi = _rp_ratios(ratios)
    s1, s2 = sigma1.eigenvalues, sigma2.eigenvalues
    B = s1 if b_matrix is None else b_matrix.eigenvalues
    p1, p2, lam, tau = ratios.p1, ratios.p2, state.lam, state.tau
    re1, re2, rt = projection_core_residuals(s1, s2, p1, p2, psi, gamma, lam, state.e1, state.e2, tau)
    K0 = p1 * state.e1 * s1 + p2 * state.e2 * s2
    K2 = (gamma * tau * K0 + lam) ** 2
    L = p1 * state.u1 * s1 + p2 * state.u2 * s2 + B
    out = {"e1": re1, "e2": re2, "tau": rt}
    for name, e, s, u in (("u1", state.e1, s1, state.u1), ("u2", state.e2, s2, state.u2)):
        rhs = psi * e**2 * np.mean(s * (gamma * tau**2 * L + state.omega) / K2)
        out[name] = abs(u - rhs) / max(1.0, abs(u))
    rhs = tau**2 * np.mean((gamma * state.omega * K0**2 + lam**2 * L) / K2)
    out["omega"] = abs(state.omega - rhs) / max(1.0, abs(state.omega))
    return out


# --------------------------------------------------------------------------- ridgeless


@dataclass(frozen=True)
class RidgelessLimits:
    theta0: float
    kappa0: float
    chi0: float
    tau0: float
    e0: float
    eta0: float
    theta0_closed_form: float
    continuation: tuple = field(default_factory=tuple)


def ridgeless_limits(sigma: Spectrum, ratios: ScalingRatios,
                     lambdas: tuple[float, ...] = (1e-4, 1e-6, 1e-8)) -> RidgelessLimits:
    """lambda -> 0+ limits of the projection scalars.

    theta0 comes from solving the fixed point along ``lambdas`` and extrapolating the
    last two points linearly to lambda = 0; the closed form I_{1,1}(theta0) = eta0 is
    returned alongside for comparison.
    """
    phi, gamma, psi = _rp_ratios(ratios)
    if abs(psi - 1.0) < 1e-3:
        raise ThresholdError("ridgeless limit is unbounded at the interpolation threshold", psi)
    # eta = I_{1,1}(theta) <= 1 always, hence the extra 1 in the min
    eta0 = min(1.0, gamma, 1.0 / phi)
    path = []
    for lam in lambdas:
        core = solve_rp_core(sigma, ratios, lam)
        path.append((lam, core.theta))
    (l1, t1), (l2, t2) = path[-2], path[-1]
    theta0 = t2 - l2 * (t1 - t2) / (l1 - l2)
    theta0 = max(theta0, 0.0)
    closed = theta_lower_bound(sigma, phi, gamma)
    return RidgelessLimits(
        theta0=theta0,
        kappa0=max(psi - 1.0, 0.0) * theta0 / phi,
        chi0=max(1.0 - psi, 0.0) * gamma * theta0,
        tau0=1.0 - eta0 / gamma,
        e0=1.0 - phi * eta0,
        eta0=eta0,
        theta0_closed_form=closed,
        continuation=tuple(path),
    )
