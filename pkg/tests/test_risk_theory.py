import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapse_lab.errors import DomainError
from collapse_lab.risk_theory import (
    classical_risk,
    isotropic_over_risk,
    isotropic_under_risk,
    iterative_closed_form,
    iterative_mixing,
    mixing_baseline,
    optimal_mixing_weight,
    rp_risk,
    weighted_mixing_risk,
    weighted_mixing_risk_exact,
    weighted_mixing_theory,
)
from collapse_lab.spectra import (
    IsotropicParams,
    MixtureModel,
    ScalingRatios,
    Spectrum,
    build_power_law_spectrum,
    inverse_covariance_delta,
)


def power_law_model(d=120, c2=0.5, noise=0.04):
    s = build_power_law_spectrum(d)
    return MixtureModel(s, Spectrum.identity(d, 1 / d, "signal_prior"), inverse_covariance_delta(s, c2), noise, noise)


def test_isotropic_under_frozen_example():
    r = isotropic_under_risk(0.5, 0.5, 1.0, 1.0)
    assert (r.bias, r.variance, r.collapse, r.total) == pytest.approx((0.0, 1.0, 0.5, 1.5))


def test_isotropic_over_frozen_example():
    r = isotropic_over_risk(2.0, 1.0, 1.0, 1.0, 1.0)
    assert (r.bias, r.variance, r.collapse) == pytest.approx((0.5, 1.0, 0.5))


def test_isotropic_over_large_phi():
    # with far fewer samples than features the fit sees only an n/d slice of the shift
    phi, p2, c2 = 1e4, 0.3, 0.8
    assert isotropic_over_risk(phi, p2, 1.0, c2, 1.0).collapse == pytest.approx(p2 * c2 / phi, rel=1e-3)
    shifted = isotropic_over_risk(phi, p2, 1.0, c2, 1.0, collapse_form="shifted_u").collapse
    assert shifted == pytest.approx(p2 * c2 * (1 - 2 * p2 / phi), rel=1e-6)


def test_isotropic_over_forms_agree_at_reference_point():
    for form in ("general", "shifted_u"):
        assert isotropic_over_risk(2.0, 1.0, 1.0, 1.0, 1.0, collapse_form=form).collapse == pytest.approx(0.5)


def test_isotropic_domains():
    with pytest.raises(DomainError):
        isotropic_under_risk(1.5, 0.1, 1.0, 1.0)
    with pytest.raises(DomainError):
        isotropic_over_risk(0.5, 0.1, 1.0, 1.0, 1.0)


def test_clean_data_scaling():
    assert isotropic_under_risk(0.2, 0.0, 1.0, 5.0).total == pytest.approx(0.25)


@given(st.floats(1e-4, 0.3), st.floats(0.05, 0.95), st.floats(0.1, 2.0))
def test_plateau_lower_bound(phi, p2, c2):
    assert isotropic_under_risk(phi, p2, 1.0, c2).total >= p2**2 * c2


def test_classical_matches_isotropic_corollaries():
    d = 400
    under = classical_risk(IsotropicParams(1.0, 1.0).model(d), ScalingRatios(phi=0.5, p2=0.5), 1e-8)
    assert under.total == pytest.approx(1.5, rel=1e-6)
    assert under.bias == pytest.approx(0.0, abs=1e-6)
    over = classical_risk(IsotropicParams(1.0, 1.0).model(d), ScalingRatios(phi=2.0, p2=1.0), 1e-8)
    ref = isotropic_over_risk(2.0, 1.0, 1.0, 1.0, 1.0)
    assert (over.bias, over.variance, over.collapse) == pytest.approx((ref.bias, ref.variance, ref.collapse), rel=1e-6)


@given(st.floats(1.05, 4.0), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_classical_over_closed_form(phi, p2, c2):
    got = classical_risk(IsotropicParams(1.0, c2).model(300), ScalingRatios(phi=phi, p2=p2), 1e-9)
    ref = isotropic_over_risk(phi, p2, 1.0, c2, 1.0)
    assert got.total == pytest.approx(ref.total, rel=1e-5, abs=1e-9)


def test_small_phi_pure_synthetic_collapse_is_trace():
    m = power_law_model(c2=0.7)
    z = classical_risk(m, ScalingRatios(phi=1e-6, p2=1.0), 1e-10).collapse
    assert z == pytest.approx(m.c2, rel=1e-4)


@given(st.floats(0.1, 3.0), st.floats(0.0, 1.0), st.floats(1e-6, 2.0))
def test_classical_components_nonnegative_and_sum(phi, p2, lam):
    r = classical_risk(power_law_model(), ScalingRatios(phi=phi, p2=p2), lam)
    assert min(r.bias, r.variance, r.collapse) >= 0
    assert r.total == pytest.approx(r.bias + r.variance + r.collapse, rel=1e-12)


def test_collapse_zero_without_synthetic_shift():
    m = power_law_model()
    for model, p2 in ((m, 0.0), (m.with_delta(Spectrum.zeros(m.d)), 0.6)):
        assert classical_risk(model, ScalingRatios(phi=0.7, p2=p2), 0.1).collapse == 0.0
        assert rp_risk(model, ScalingRatios(phi=0.7, p2=p2, gamma=1.3), 0.1).collapse == 0.0


def test_rp_single_source_matches_delta_free_model():
    m = power_law_model()
    r0 = ScalingRatios(phi=0.9, p2=0.0, gamma=0.7)
    a = rp_risk(m, r0, 1e-3)
    b = rp_risk(m.with_delta(Spectrum.zeros(m.d)), r0, 1e-3)
    assert (a.bias, a.variance) == pytest.approx((b.bias, b.variance), rel=1e-14)


@given(st.floats(0.2, 2.5), st.floats(0.05, 0.95), st.floats(1e-3, 1.0))
def test_rp_large_gamma_reduces_to_classical(phi, p2, lam):
    m = power_law_model()
    gamma = 1e6
    rp = rp_risk(m, ScalingRatios(phi=phi, p2=p2, gamma=gamma), gamma * lam)
    cl = classical_risk(m, ScalingRatios(phi=phi, p2=p2), lam)
    for a, b in ((rp.bias, cl.bias), (rp.variance, cl.variance), (rp.collapse, cl.collapse)):
        assert a == pytest.approx(b, rel=1e-3)


def test_rp_interpolation_peak():
    m = MixtureModel(Spectrum.identity(200), Spectrum.identity(200, 1 / 200, "signal_prior"),
                     Spectrum.identity(200, 0.5 / 200, "shift_prior"), 0.01, 0.01)
    phi = 1.2
    e = {psi: rp_risk(m, ScalingRatios(phi=phi, p2=0.4, psi=psi), 1e-8).total for psi in (0.5, 1.0, 2.0)}
    assert e[1.0] >= 10 * max(e[0.5], e[2.0])
    assert "near_threshold" in rp_risk(m, ScalingRatios(phi=phi, p2=0.4, psi=1.0), 1e-8).flags


@given(st.floats(0.2, 3.0), st.floats(0.2, 4.0), st.floats(0.0, 1.0), st.floats(1e-4, 1.0))
def test_rp_components_nonnegative(phi, gamma, p2, lam):
    r = ScalingRatios(phi=phi, p2=p2, gamma=gamma)
    if abs(r.psi - 1) < 0.02:
        return
    out = rp_risk(power_law_model(), r, lam)
    assert min(out.bias, out.variance, out.collapse) >= 0


def test_rp_zeta_variant_switch():
    m = power_law_model(c2=1.0)
    r = ScalingRatios(phi=1.2, p2=0.4, gamma=0.4)
    a = rp_risk(m, r, 1e-8)
    b = rp_risk(m, r, 1e-8, zeta_omega_coeff="p2")
    assert b.collapse > a.collapse
    assert (a.bias, a.variance) == (b.bias, b.variance)
    with pytest.raises(DomainError):
        rp_risk(m, r, 1e-8, zeta_omega_coeff="other")


def test_lambda_zero_is_floored():
    r = classical_risk(power_law_model(), ScalingRatios(phi=0.5), 0.0)
    assert "lambda_floored" in r.flags
    assert r.scalars["lambda"] == 1e-8


def test_weighted_formula_endpoints():
    phi, p2, s1, s2, c2 = 0.05, 0.3, 1.2, 0.8, 0.9
    assert weighted_mixing_risk(0.0, phi, p2, s1, s2, c2) == pytest.approx((1 - p2) * s1 * phi)
    assert weighted_mixing_risk(1.0, phi, p2, s1, s2, c2) == pytest.approx(p2**2 * c2 + p2 * s2 * phi)
    grid = np.linspace(0, 1, 11)
    flat = weighted_mixing_risk(grid, phi, p2, s1, s2, 0.0)
    np.testing.assert_allclose(np.diff(flat, 2), 0.0, atol=1e-15)


def test_weighted_exact_at_pooled_weight():
    phi, p2, s, c2 = 0.05, 0.3, 1.0, 0.9
    assert weighted_mixing_risk_exact(p2, phi, p2, s, s, c2) == pytest.approx(s * phi + p2**2 * c2)


def test_weighted_theory_equals_pooled_at_alpha_p2():
    m = power_law_model(c2=0.8, noise=0.3)
    r = ScalingRatios(phi=0.4, p2=0.25)
    a = weighted_mixing_theory(m, r, 0.25, 0.05)
    b = classical_risk(m, r, 0.05)
    assert (a.bias, a.variance, a.collapse) == pytest.approx((b.bias, b.variance, b.collapse), rel=1e-9)


def test_optimal_weight_examples():
    mw = optimal_mixing_weight(0.01, 0.5, 1.0, 1.0, 1.0)
    assert mw.alpha_star == 0.0
    assert optimal_mixing_weight(0.01, 0.3, 1.0, 1.0, 0.0).alpha_star == 1.0


@given(st.floats(0.001, 0.2), st.floats(0.05, 0.95), st.floats(0.1, 2.0), st.floats(0.1, 2.0),
       st.floats(0.01, 2.0))
def test_optimal_weight_grid_matches_stationary(phi, p2, s1, s2, c2):
    mw = optimal_mixing_weight(phi, p2, s1, s2, c2)
    assert abs(mw.alpha_star - mw.alpha_stationary) <= mw.grid_step


def test_iterative_frozen_example():
    base = mixing_baseline(1.0, 1 / 11)
    assert base == pytest.approx(0.1)
    tr = iterative_mixing(1.0, 0.5, 1.0, 1 / 11, 3)
    assert tr.quality_sequence[3] == pytest.approx(0.146875, rel=1e-12)
    assert tr.max_closed_form_gap <= 1e-12


def test_iterative_edge_cases():
    tr0 = iterative_mixing(2.0, 0.0, 1.0, 0.2, 6)
    np.testing.assert_allclose(tr0.risk_sequence, mixing_baseline(1.0, 0.2))
    tr1 = iterative_mixing(2.0, 1.0, 1.0, 0.2, 6)
    np.testing.assert_allclose(tr1.risk_sequence, 2.0 + np.arange(1, 7) * 0.25)
    assert np.all(np.diff(tr1.risk_sequence) > 0)
    assert tr1.limit == np.inf


@given(st.floats(0.0, 0.99), st.floats(0.0, 5.0), st.floats(0.01, 0.9), st.integers(1, 50))
def test_iterative_recursion_equals_closed_form(p2, c0, phi, steps):
    tr = iterative_mixing(c0, p2, 1.0, phi, steps)
    np.testing.assert_allclose(tr.quality_sequence, iterative_closed_form(c0, p2, tr.baseline, np.arange(steps + 1)),
                               rtol=1e-12, atol=1e-12)
