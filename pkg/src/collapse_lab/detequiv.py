"""Deterministic equivalents of the resolvent trace functionals r1..r5.

For the classical model, with M_j = X_j^T X_j / n, M = M_1 + M_2 and Q = (M + lambda)^-1::

    r1_j(A)    = E tr A M_j Q
    r2(A, B)   = E tr A Q B Q
    r3_j(A, B) = E tr A M_j Q B Q M_j
    r4_j(A, B) = E tr A M_j Q B Q
    r5(A, B)   = E tr A M_1 Q B Q M_2

For random projections Q is replaced by S R S^T with R = (S^T M S + lambda)^-1, and
r2 is not defined.  All matrices are diagonal, so every closed form below is an
eigenvalue-wise expression summed over the spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fixed_point import GeneralEquivalentsState, solve_general_classical, solve_general_projections
from .spectra import ScalingRatios, Spectrum, check_same_dimension

KINDS = ("r1", "r2", "r3", "r4", "r5")
MODEL_CLASSES = ("classical", "projections")


@dataclass(frozen=True)
class FunctionalRequest:
    kind: str
    a_matrix: Spectrum
    b_matrix: Spectrum | None = None
    source_index: int = 1
    model_class: str = "classical"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown functional kind {self.kind!r}")
        if self.model_class not in MODEL_CLASSES:
            raise DomainError(f"unknown model class {self.model_class!r}")
        if self.source_index not in (1, 2):
            raise DomainError("source_index must be 1 or 2")
        if self.kind != "r1" and self.b_matrix is None:
            raise DomainError(f"{self.kind} needs b_matrix")
        if self.kind == "r2" and self.model_class == "projections":
            raise DomainError("r2 is only defined for the classical model")


def _pick(state: GeneralEquivalentsState, s1, s2, j: int):
    """Return (e_j, u_j, p_j, Sigma_j) and the same for the other source j'."""
    own = (state.e1, state.u1, state.p1, s1)
    other = (state.e2, state.u2, state.p2, s2)
    return (own, other) if j == 1 else (other, own)


def classical_terms(req: FunctionalRequest, state: GeneralEquivalentsState, s1, s2) -> float:
    lam = state.lam
    A = req.a_matrix.eigenvalues
    B = None if req.b_matrix is None else req.b_matrix.eigenvalues
    p1, p2 = state.p1, state.p2
    K = p1 * state.e1 * s1 + p2 * state.e2 * s2 + lam
    (e, u, p, s), (eo, uo, po, so) = _pick(state, s1, s2, req.source_index)
    if req.kind == "r1":
        return float(p * e * np.sum(A * s / K))
    if req.kind == "r2":
        L = p1 * state.u1 * s1 + p2 * state.u2 * s2 + B
        return float(np.sum(A * L / K**2))
    if req.kind == "r3":
        C = p * e**2 * (B + po * uo * so) * s + u * (po * eo * so + lam) ** 2
        return float(p * np.sum(A * s * C / K**2))
    if req.kind == "r4":
        D = e * B - lam * u + po * (e * uo - eo * u) * so
        return float(p * np.sum(A * s * D / K**2))
    e1, e2, u1, u2 = state.e1, state.e2, state.u1, state.u2
    E = e1 * e2 * B - lam * (e1 * u2 + e2 * u1) - p1 * e1**2 * u2 * s1 - p2 * e2**2 * u1 * s2
    return float(p1 * p2 * np.sum(A * s1 * s2 * E / K**2))


def projection_terms(req: FunctionalRequest, state: GeneralEquivalentsState, s1, s2) -> float:
    lam, g, tau, w = state.lam, state.gamma, state.tau, state.omega
    A = req.a_matrix.eigenvalues
    B = None if req.b_matrix is None else req.b_matrix.eigenvalues
    p1, p2 = state.p1, state.p2
    K = g * tau * (p1 * state.e1 * s1 + p2 * state.e2 * s2) + lam
    (e, u, p, s), (eo, uo, po, so) = _pick(state, s1, s2, req.source_index)
    if req.kind == "r1":
        return float(g * tau * p * e * np.sum(A * s / K))
    if req.kind == "r3":
        C = g * p * e**2 * (g * tau**2 * (B + po * uo * so) + w) * s + u * (g * tau * po * eo * so + lam) ** 2
        return float(p * np.sum(A * s * C / K**2))
    if req.kind == "r4":
        D = g * tau**2 * e * B + (e * w - tau * lam * u) + g * tau**2 * po * (e * uo - eo * u) * so
        return float(g * p * np.sum(A * s * D / K**2))
    e1, e2, u1, u2 = state.e1, state.e2, state.u1, state.u2
    E = (g * e1 * e2 * (g * tau**2 * B + w)
         - g**2 * tau**2 * (p1 * e1**2 * u2 * s1 + p2 * e2**2 * u1 * s2)
         - g * tau * lam * (e1 * u2 + e2 * u1))
    return float(p1 * p2 * np.sum(A * s1 * s2 * E / K**2))


def _b_for_state(req: FunctionalRequest, sigma1: Spectrum) -> Spectrum:
    # r1 does not depend on B; any B gives the same (e1, e2) and the u's are unused
    return req.b_matrix if req.b_matrix is not None else sigma1


def classical_functional(req: FunctionalRequest, sigma1: Spectrum, sigma2: Spectrum,
                         ratios: ScalingRatios, lam: float,
                         state: GeneralEquivalentsState | None = None) -> float:
    """Deterministic equivalent of a classical functional; pass ``state`` to reuse a solve with the same B."""
    check_same_dimension([sigma1, sigma2, req.a_matrix])
    if req.model_class != "classical":
        raise DomainError("request is for the projections model")
    if state is None:
        state = solve_general_classical(sigma1, sigma2, ratios, lam, _b_for_state(req, sigma1))
    return classical_terms(req, state, sigma1.eigenvalues, sigma2.eigenvalues)


def projections_functional(req: FunctionalRequest, sigma1: Spectrum, sigma2: Spectrum,
                           ratios: ScalingRatios, lam: float,
                           state: GeneralEquivalentsState | None = None) -> float:
    check_same_dimension([sigma1, sigma2, req.a_matrix])
    if req.model_class != "projections":
        raise DomainError("request is for the classical model")
    if state is None:
        state = solve_general_projections(sigma1, sigma2, ratios, lam, _b_for_state(req, sigma1))
    return projection_terms(req, state, sigma1.eigenvalues, sigma2.eigenvalues)


def evaluate(req: FunctionalRequest, sigma1: Spectrum, sigma2: Spectrum, ratios: ScalingRatios,
             lam: float) -> float:
    if req.model_class == "classical":
        return classical_functional(req, sigma1, sigma2, ratios, lam)
    return projections_functional(req, sigma1, sigma2, ratios, lam)


def decomposition_from_functionals(model, ratios: ScalingRatios, lam: float,
                                   model_class: str = "classical") -> dict:
    """Bias, variance and collapse on the real distribution assembled from r1..r5.

    Classical::

        B = lambda^2 r2(Gamma, Sigma),  zeta = r3_2(Delta, Sigma)
    Projections::

        B = tr Gamma Sigma + 2 r5(Gamma, Sigma) + r3_1(Gamma, Sigma) + r3_2(Gamma, Sigma)
            - 2 r1_1(Gamma Sigma) - 2 r1_2(Gamma Sigma),   zeta = r3_2(Delta, Sigma)

    and in both cases V = sum_j sigma_j^2 / n r4_j(I, Sigma).
    """
    sigma = model.sigma
    d = sigma.d
    n = d / ratios.phi
    G = model.gamma_prior
    ident = Spectrum.identity(d, role_tag="generic")
    if model_class == "classical":
        st = solve_general_classical(sigma, sigma, ratios, lam, sigma)

        def f(kind, a, j=1):
            return classical_terms(FunctionalRequest(kind, a, sigma, j, "classical"), st, sigma.eigenvalues,
                                   sigma.eigenvalues)

        lam_used = st.lam
        bias = lam_used**2 * f("r2", G)
    elif model_class == "projections":
        st = solve_general_projections(sigma, sigma, ratios, lam, sigma)

        def f(kind, a, j=1):
            return projection_terms(FunctionalRequest(kind, a, sigma, j, "projections"), st,
                                    sigma.eigenvalues, sigma.eigenvalues)

        gs = Spectrum(G.eigenvalues * sigma.eigenvalues, "generic")
        bias = (float(np.dot(G.eigenvalues, sigma.eigenvalues)) + 2 * f("r5", G) + f("r3", G, 1)
                + f("r3", G, 2) - 2 * f("r1", gs, 1) - 2 * f("r1", gs, 2))
    else:
        raise DomainError(f"unknown model class {model_class!r}")
    variance = (model.noise1 * f("r4", ident, 1) + model.noise2 * f("r4", ident, 2)) / n
    collapse = f("r3", model.delta, 2)
    return {"B": bias, "V": variance, "zeta": collapse, "E": bias + variance + collapse}
