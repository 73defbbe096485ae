"""Diagonal spectra, mixture models and scaling regimes.

Every matrix in this package commutes with every other one, so each is stored
as the array of its diagonal entries. Traces of products of such matrices are
plain sums over eigenvalue index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

ROLES = ("covariance", "signal_prior", "shift_prior", "generic")


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a diagonal positive-semidefinite matrix."""

    eigenvalues: np.ndarray
    role_tag: str = "covariance"

    def __post_init__(self):
        vals = np.array(self.eigenvalues, dtype=float, copy=True).reshape(-1)
        if vals.size < 1:
            raise DomainError("a spectrum needs at least one eigenvalue")
        if self.role_tag not in ROLES:
            raise DomainError(f"unknown role_tag {self.role_tag!r}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("eigenvalues must be finite")
        if np.any(vals < 0):
            raise DomainError("eigenvalues must be non-negative")
        if self.role_tag == "covariance" and np.any(vals <= 0):
            raise DomainError("a covariance spectrum must be positive definite")
        vals.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)

    @property
    def d(self) -> int:
        return self.eigenvalues.size

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    def scaled(self, factor: float, role_tag: str | None = None) -> "Spectrum":
        return Spectrum(factor * self.eigenvalues, role_tag or self.role_tag)

    @classmethod
    def identity(cls, d: int, scale: float = 1.0, role_tag: str = "covariance") -> "Spectrum":
        return cls(np.full(d, float(scale)), role_tag)

    @classmethod
    def zeros(cls, d: int, role_tag: str = "shift_prior") -> "Spectrum":
        return cls(np.zeros(d), role_tag)

    def __len__(self) -> int:
        return self.d


@dataclass(frozen=True)
class ScalingRatios:
    """Proportionate-limit ratios phi = d/n, gamma = m/d, psi = m/n and the synthetic fraction p2."""

    phi: float
    p2: float = 0.0
    gamma: float | None = None
    psi: float | None = None

    def __post_init__(self):
        if not self.phi > 0:
            raise DomainError("phi must be positive")
        if not 0.0 <= self.p2 <= 1.0:
            raise DomainError("p2 must lie in [0, 1]")
        gamma, psi = self.gamma, self.psi
        if gamma is None and psi is not None:
            gamma = psi / self.phi
        if gamma is not None:
            if not gamma > 0:
                raise DomainError("gamma must be positive")
            if psi is None:
                psi = self.phi * gamma
            elif abs(psi - self.phi * gamma) > 1e-12 * max(abs(psi), 1.0):
                raise DomainError(f"psi={psi} inconsistent with phi*gamma={self.phi * gamma}")
        object.__setattr__(self, "gamma", None if gamma is None else float(gamma))
        object.__setattr__(self, "psi", None if psi is None else float(psi))

    @property
    def p1(self) -> float:
        return 1.0 - self.p2

    @property
    def has_projection(self) -> bool:
        return self.gamma is not None

    @classmethod
    def from_counts(cls, d: int, n: int, n2: int = 0, m: int | None = None) -> "ScalingRatios":
        if n < 1:
            raise DomainError("need at least one sample")
        return cls(phi=d / n, p2=n2 / n, gamma=None if m is None else m / d)


@dataclass(frozen=True)
class MixtureModel:
    """Real/synthetic data model: feature covariance, prior on the true weights, shift prior, noise levels."""

    sigma: Spectrum
    gamma_prior: Spectrum
    delta: Spectrum
    noise1: float = 1.0
    noise2: float = 1.0

    def __post_init__(self):
        d = self.sigma.d
        if self.gamma_prior.d != d or self.delta.d != d:
            raise DomainError("all spectra of a model must share the dimension d")
        if self.sigma.role_tag != "covariance":
            raise DomainError("sigma must be a covariance spectrum")
        if self.noise1 < 0 or self.noise2 < 0:
            raise DomainError("noise variances must be non-negative")

    @property
    def d(self) -> int:
        return self.sigma.d

    @property
    def c2(self) -> float:
        """Synthetic-data quality tr(Sigma Delta).

        With Delta = (c2/d) I or (c2/d) Sigma^{-1} this returns c2, the scale on which
        every closed-form risk in the package is written.
        """
        return float(np.dot(self.sigma.eigenvalues, self.delta.eigenvalues))

    def pooled_noise(self, ratios: ScalingRatios) -> float:
        return ratios.p1 * self.noise1 + ratios.p2 * self.noise2

    def with_delta(self, delta: Spectrum) -> "MixtureModel":
        return MixtureModel(self.sigma, self.gamma_prior, delta, self.noise1, self.noise2)


@dataclass(frozen=True)
class IsotropicParams:
    """Signal strength r2 and quality c2 of the isotropic corollaries."""

    r2: float = 1.0
    c2: float = 0.0

    def __post_init__(self):
        if self.r2 < 0 or self.c2 < 0:
            raise DomainError("r2 and c2 must be non-negative")

    def model(self, d: int, noise1: float = 1.0, noise2: float = 1.0) -> MixtureModel:
        return MixtureModel(
            sigma=Spectrum.identity(d),
            gamma_prior=Spectrum.identity(d, self.r2 / d, "signal_prior"),
            delta=Spectrum.identity(d, self.c2 / d, "shift_prior"),
            noise1=noise1,
            noise2=noise2,
        )


def spectral_moment(sigma: Spectrum | np.ndarray, k: int, l: int, t: float,
                    normalized: bool = False) -> float:
    """Sum of lambda^k / (lambda + t)^l over the spectrum, divided by d if normalized.

    ``df_k(t) = spectral_moment(s, k, k, t)`` and ``I_{k,l}(t) = spectral_moment(s, k, l, t, True)``.
    """
    lam = sigma.eigenvalues if isinstance(sigma, Spectrum) else np.asarray(sigma, dtype=float)
    if k < 0 or l < 0:
        raise DomainError("moment orders must be non-negative")
    if t < 0:
        raise DomainError("t must be non-negative")
    denom = lam + t
    if l > 0 and np.any(denom == 0):
        raise DomainError("singular moment: zero eigenvalue at t = 0")
    val = float(np.sum(lam**k / denom**l))
    return val / lam.size if normalized else val


def degrees_of_freedom(sigma: Spectrum, k: int, t: float) -> float:
    return spectral_moment(sigma, k, k, t)


def build_power_law_spectrum(d: int, exponent: float = 1.0) -> Spectrum:
    """Eigenvalues C / j**exponent, j = 1..d, with C chosen so the trace is 1."""
    if d < 1:
        raise DomainError("d must be at least 1")
    raw = np.arange(1, d + 1, dtype=float) ** (-float(exponent))
    # sum smallest first to keep the trace at 1 to rounding
    vals = raw / np.sum(raw[::-1])
    return Spectrum(vals, "covariance")


def classical_collapse_delta(loops: Iterable[tuple[float, float]], sigma: Spectrum) -> Spectrum:
    """Shift prior produced by a chain of self-consuming OLS fits.

    Each loop is ``(noise_var, phi)`` for one generation with ``phi = d / n_l < 1``; the
    result is ``(sum_l noise_var * phi / (1 - phi)) / d * Sigma^{-1}``.
    """
    total = 0.0
    for noise_var, phi_l in loops:
        if noise_var < 0:
            raise DomainError("loop noise must be non-negative")
        if not 0 < phi_l < 1:
            raise DomainError(f"phi_l={phi_l}: interpolation is not possible at this stage")
        total += noise_var * phi_l / (1.0 - phi_l)
    return Spectrum(total / sigma.d / sigma.eigenvalues, "shift_prior")


def inverse_covariance_delta(sigma: Spectrum, c2: float) -> Spectrum:
    """Delta = (c2/d) Sigma^{-1}, whose quality is exactly c2."""
    return Spectrum(c2 / sigma.d / sigma.eigenvalues, "shift_prior")


def isotropic_delta(d: int, c2: float) -> Spectrum:
    return Spectrum.identity(d, c2 / d, "shift_prior")


def check_same_dimension(spectra: Sequence[Spectrum]) -> int:
    dims = {s.d for s in spectra}
    if len(dims) != 1:
        raise DomainError(f"spectra have mismatched dimensions {sorted(dims)}")
    return dims.pop()
