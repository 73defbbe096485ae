import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapse_lab.errors import DomainError
from collapse_lab.spectra import (
    IsotropicParams,
    MixtureModel,
    ScalingRatios,
    Spectrum,
    build_power_law_spectrum,
    classical_collapse_delta,
    degrees_of_freedom,
    inverse_covariance_delta,
    isotropic_delta,
    spectral_moment,
)


def test_power_law_d4_frozen_values():
    np.testing.assert_allclose(build_power_law_spectrum(4).eigenvalues, [0.48, 0.24, 0.16, 0.12], rtol=1e-14)


def test_power_law_d1_is_one():
    assert build_power_law_spectrum(1, exponent=3.7).eigenvalues.tolist() == [1.0]


def test_power_law_d600_unit_trace():
    assert abs(build_power_law_spectrum(600).trace - 1.0) < 1e-12


@given(st.integers(1, 500), st.floats(0.1, 3.0))
def test_power_law_positive_decreasing_unit_trace(d, a):
    s = build_power_law_spectrum(d, a).eigenvalues
    assert np.all(s > 0)
    assert np.all(np.diff(s) <= 0)
    assert abs(s.sum() - 1.0) < 1e-12


def test_moment_identity_half():
    assert spectral_moment(Spectrum.identity(7), 1, 1, 1.0, normalized=True) == pytest.approx(0.5)


def test_df_at_zero_is_dimension():
    s = build_power_law_spectrum(13)
    for k in (1, 2, 3):
        assert degrees_of_freedom(s, k, 0.0) == pytest.approx(13.0, rel=1e-12)


def test_power_law_d4_moment_direct_sum():
    # 4-term summation written out by hand
    vals = [0.48, 0.24, 0.16, 0.12]
    expected = sum(v / (v + 1.0) for v in vals) / 4
    got = spectral_moment(build_power_law_spectrum(4), 1, 1, 1.0, normalized=True)
    assert got == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_df_decreasing_in_t(t1, t2):
    s = build_power_law_spectrum(20)
    lo, hi = sorted((t1, t2))
    assert degrees_of_freedom(s, 1, hi) <= degrees_of_freedom(s, 1, lo) + 1e-12


def test_moment_rejects_singular_and_negative():
    s = Spectrum(np.array([0.0, 1.0]), "generic")
    with pytest.raises(DomainError):
        spectral_moment(s, 1, 1, 0.0)
    with pytest.raises(DomainError):
        spectral_moment(s, 1, 1, -1.0)


def test_covariance_must_be_positive_definite():
    with pytest.raises(DomainError):
        Spectrum(np.array([1.0, 0.0]), "covariance")
    with pytest.raises(DomainError):
        Spectrum(np.array([1.0, -0.1]), "shift_prior")


def test_ratios_consistency():
    r = ScalingRatios(phi=0.5, p2=0.3, gamma=4.0)
    assert r.psi == pytest.approx(2.0, rel=1e-12)
    assert r.p1 + r.p2 == 1.0
    assert ScalingRatios(phi=0.5, psi=2.0).gamma == pytest.approx(4.0)
    with pytest.raises(DomainError):
        ScalingRatios(phi=0.5, gamma=4.0, psi=3.0)
    with pytest.raises(DomainError):
        ScalingRatios(phi=0.5, p2=1.5)
    r = ScalingRatios.from_counts(600, 500, 200, m=250)
    assert (r.phi, r.p2, r.gamma) == (1.2, 0.4, 250 / 600)


def test_quality_conventions():
    s = build_power_law_spectrum(50)
    g = Spectrum.identity(50, 1 / 50, "signal_prior")
    assert MixtureModel(s, g, inverse_covariance_delta(s, 0.7)).c2 == pytest.approx(0.7)
    iso = IsotropicParams(r2=1.0, c2=0.3).model(50)
    assert iso.c2 == pytest.approx(0.3)
    assert MixtureModel(s, g, Spectrum.zeros(50)).c2 == 0.0
    assert isotropic_delta(50, 2.0).eigenvalues[0] == pytest.approx(2.0 / 50)


def test_pooled_noise():
    m = IsotropicParams().model(5, noise1=1.0, noise2=3.0)
    assert m.pooled_noise(ScalingRatios(phi=0.5, p2=0.25)) == pytest.approx(1.5)


def test_model_dimension_mismatch():
    with pytest.raises(DomainError):
        MixtureModel(Spectrum.identity(3), Spectrum.identity(4, role_tag="signal_prior"), Spectrum.zeros(3))


def test_collapse_delta_examples():
    d = 10
    sig = Spectrum.identity(d)
    g = Spectrum.identity(d, 1 / d, "signal_prior")
    assert np.all(classical_collapse_delta([], sig).eigenvalues == 0)
    one = classical_collapse_delta([(1.0, 0.5)], sig)
    np.testing.assert_allclose(one.eigenvalues, 1 / d)
    assert MixtureModel(sig, g, one).c2 == pytest.approx(1.0)
    two = classical_collapse_delta([(1.0, 1 / 3), (1.0, 1 / 3)], sig)
    assert MixtureModel(sig, g, two).c2 == pytest.approx(1.0)
    with pytest.raises(DomainError):
        classical_collapse_delta([(1.0, 1.0)], sig)
