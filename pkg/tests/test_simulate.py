import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from collapse_lab.detequiv import FunctionalRequest
from collapse_lab.errors import DomainError
from collapse_lab.simulate import (
    draw_projection,
    iterative_mixing_sim,
    make_rng,
    mc_functional,
    ridge_fit,
    rp_fit,
    sample_dataset,
    shared_design_errors,
    solve_ridge,
    weighted_ridge_fit,
)
from collapse_lab.risk_theory import mixing_baseline
from collapse_lab.spectra import (
    IsotropicParams,
    MixtureModel,
    Spectrum,
    build_power_law_spectrum,
    inverse_covariance_delta,
)


def pl_model(d=40, c2=0.5, noise=0.25):
    s = build_power_law_spectrum(d)
    return MixtureModel(s, Spectrum.identity(d, 1 / d, "signal_prior"), inverse_covariance_delta(s, c2), noise, noise)


def test_dataset_is_reproducible():
    m = pl_model()
    a = sample_dataset(m, 40, 30, 20, seed=5, trial=2)
    b = sample_dataset(m, 40, 30, 20, seed=5, trial=2)
    for f in ("x_real", "y_real", "x_syn", "y_syn", "w1_star", "w2_star"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = sample_dataset(m, 40, 30, 20, seed=5, trial=3)
    assert not np.array_equal(a.x_real, c.x_real)


def test_stream_keys_are_distinct():
    draws = {role: make_rng(0, "s", 0, role).standard_normal() for role in
             ("prior", "data_real", "data_syn", "noise_real", "noise_syn", "projection")}
    assert len(set(draws.values())) == len(draws)
    assert make_rng(0, "s", 0, "data_real", step=1).standard_normal() != draws["data_real"]
    with pytest.raises(DomainError):
        make_rng(0, "s", 0, "other")


def test_zero_shift_gives_equal_weights():
    m = pl_model(c2=0.0)
    ds = sample_dataset(m, 40, 10, 10, 0)
    assert np.array_equal(ds.w1_star, ds.w2_star)


def test_prior_norm_concentrates():
    d = 10_000
    ds = sample_dataset(IsotropicParams(1.0, 0.0).model(d), d, 1, 0, 3)
    assert 0.9 <= float(ds.w1_star @ ds.w1_star) <= 1.1


def test_noiseless_identification():
    m = pl_model(noise=0.0)
    ds = sample_dataset(m, 40, 400, 0, 1)
    run = ridge_fit(ds, 1e-12)
    np.testing.assert_allclose(run.fitted, ds.w1_star, atol=1e-6)
    assert run.test_error <= 1e-8


def test_huge_lambda_gives_zero_fit():
    ds = sample_dataset(pl_model(), 40, 30, 10, 2)
    run = ridge_fit(ds, 1e12)
    assert np.abs(run.fitted).max() < 1e-9
    assert run.test_error == pytest.approx(float(ds.sigma @ ds.w1_star**2), rel=1e-6)


@given(st.integers(5, 40), st.integers(5, 40), st.floats(1e-3, 10.0), st.integers(0, 10**6))
def test_primal_dual_agree(n, d, lam, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    w = rng.uniform(0.1, 1.0, n)
    np.testing.assert_allclose(solve_ridge(x, y, lam, w, dual=True), solve_ridge(x, y, lam, w, dual=False),
                               rtol=1e-8, atol=1e-10)


def test_clean_data_mean_error_matches_theory():
    d, n = 100, 2000
    model = IsotropicParams(1.0, 0.0).model(d)
    errs = [ridge_fit(sample_dataset(model, d, n, 0, 11, trial=t), 1e-8).test_error for t in range(20)]
    theory = mixing_baseline(1.0, d / n)
    se = np.std(errs, ddof=1) / np.sqrt(20)
    assert abs(np.mean(errs) - theory) <= 3 * se


def test_rp_identity_projection_is_ridge():
    ds = sample_dataset(pl_model(), 40, 50, 20, 4)
    a = rp_fit(ds, 40, 0.01, projection=np.eye(40))
    b = ridge_fit(ds, 0.01)
    np.testing.assert_allclose(a.fitted, b.fitted, rtol=1e-10, atol=1e-12)


def test_projection_nested_in_m():
    s_small = draw_projection(30, 10, 0, "x", 1)
    s_big = draw_projection(30, 25, 0, "x", 1)
    assert s_small.shape == (30, 10)
    np.testing.assert_array_equal(s_big[:, :10], s_small)


def test_weighted_fit_identities():
    ds = sample_dataset(pl_model(), 40, 60, 20, 6)
    pooled = ridge_fit(ds, 0.05)
    np.testing.assert_allclose(weighted_ridge_fit(ds, 20 / 80, 0.05).fitted, pooled.fitted, rtol=1e-8, atol=1e-12)
    real_only = sample_dataset(pl_model(), 40, 60, 0, 6)
    np.testing.assert_allclose(weighted_ridge_fit(ds, 0.0, 0.05).fitted, ridge_fit(real_only, 0.05).fitted,
                               rtol=1e-8, atol=1e-12)
    with pytest.raises(DomainError):
        weighted_ridge_fit(ds, 1.5, 0.05)


def test_weighted_alpha_curve_is_u_shaped():
    d, n1, n2 = 50, 1000, 1000
    model = IsotropicParams(1.0, 1.0).model(d)
    alphas = np.linspace(0, 1, 11)
    curve = np.mean([[weighted_ridge_fit(sample_dataset(model, d, n1, n2, 9, trial=t), a, 1e-8).test_error
                      for a in alphas] for t in range(5)], axis=0)
    k = int(np.argmin(curve))
    assert 0 < k < len(alphas) - 1
    assert curve[0] > curve[k] < curve[-1]


@pytest.mark.parametrize("m,alpha", [(None, None), (25, None), (None, 0.3)])
def test_shared_design_matches_single_fits(m, alpha):
    models = [pl_model(c2=c) for c in (0.0, 0.5, 1.0)]
    errs = shared_design_errors(models, 30, 20, 0.01, 3, "sd", 1, m=m, alpha=alpha)
    for model, err in zip(models, errs):
        ds = sample_dataset(model, 40, 30, 20, 3, "sd", 1)
        if m is not None:
            ref = rp_fit(ds, m, 0.01).test_error
        elif alpha is not None:
            ref = weighted_ridge_fit(ds, alpha, 0.01).test_error
        else:
            ref = ridge_fit(ds, 0.01).test_error
        assert err == pytest.approx(ref, rel=1e-8)


def test_iterative_sim_edge_cases():
    model = IsotropicParams(1.0, 1.0).model(30)
    flat = iterative_mixing_sim(model, 30, 300, 0.0, 1e-8, 5, 0)
    assert np.all(np.abs(flat.risk_sequence - mixing_baseline(1.0, 0.1)) < 0.1)
    # p2 = 1 adds one clean-data error per step; average trials to see the drift
    big = IsotropicParams(1.0, 1.0).model(100)
    ups = [iterative_mixing_sim(big, 100, 1000, 1.0, 1e-8, 5, 0, trial=t) for t in range(5)]
    mean = np.mean([u.risk_sequence for u in ups], axis=0)
    assert np.all(np.diff(mean) > 0)
    assert np.array_equal(ups[0].quality_sequence[1:], ups[0].risk_sequence)


def test_mc_functional_trivial_and_large_lambda():
    d = 20
    s1 = build_power_law_spectrum(d)
    s2 = s1.scaled(2.0)
    zero = FunctionalRequest("r1", Spectrum.zeros(d, "generic"))
    assert mc_functional(zero, s1, s2, d, 15, 15, 0.5, 5, 0) == (0.0, 0.0)
    a = Spectrum.identity(d, role_tag="generic")
    lam = 1e4
    for j, s, nj in ((1, s1, 15), (2, s2, 25)):
        est, _ = mc_functional(FunctionalRequest("r1", a, source_index=j), s1, s2, d, 15, 25, lam, 200, 0)
        assert est == pytest.approx(s.trace * (nj / 40) / lam, rel=0.05)
    with pytest.raises(DomainError):
        mc_functional(zero, s1, s2, d, 15, 15, 0.5, 1, 0)
