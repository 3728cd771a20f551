import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CR, CU, small_heats
from oracles import brute_force_nnls
from scrapkf.baseline import (
    WindowConfig,
    kkt_residual,
    nnls_gram,
    nnls_solve,
    ols_init,
    predict_from_alpha,
    regression_target,
    windowed_nnls,
)
from scrapkf.exceptions import DomainError, SolverError
from scrapkf.model import Heats


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 8), st.integers(1, 4), st.integers(0, 2 ** 31 - 1))
def test_nnls_matches_enumeration(m, n, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(m, n))
    y = r.normal(size=m)
    b = nnls_solve(X, y)
    ref, ref_obj = brute_force_nnls(X, y)
    assert (b >= 0).all()
    assert np.sum((X @ b - y) ** 2) <= ref_obj + 1e-10 * max(1.0, ref_obj)
    assert kkt_residual(X, y, b) <= 1e-8 * max(1.0, np.abs(X.T @ y).max())


def test_nnls_known_solution():
    # unconstrained optimum (1, -1); constrained optimum puts beta_2 = 0
    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = X @ np.array([1.0, -1.0])
    b = nnls_solve(X, y)
    # with beta_2 = 0: minimise (b-1)^2 + 1 + b^2 -> b = 0.5
    np.testing.assert_allclose(b, [0.5, 0.0], atol=1e-14)


def test_nnls_exact_recovery_and_zero_target():
    r = np.random.default_rng(3)
    X = r.uniform(0, 1, (30, 5))
    beta = np.array([0.0, 2.0, 0.5, 0.0, 1.0])
    np.testing.assert_allclose(nnls_solve(X, X @ beta), beta, atol=1e-12)
    np.testing.assert_array_equal(nnls_solve(X, np.zeros(30)), np.zeros(5))


def test_nnls_iteration_cap():
    r = np.random.default_rng(4)
    X = r.uniform(0, 1, (20, 6))
    with pytest.raises(SolverError) as exc:
        nnls_solve(X, X @ np.ones(6), max_iter=2)
    assert "iterations" in exc.value.diagnostics


def test_nnls_input_checks():
    with pytest.raises(DomainError):
        nnls_solve(np.ones((3, 2)), np.ones(4))


def test_nnls_gram_warm_start_agrees():
    r = np.random.default_rng(5)
    X = r.uniform(0, 1, (40, 6))
    y = X @ np.array([1.0, 0.0, 2.0, 0.0, 0.5, 0.0]) + r.normal(0, 0.1, 40)
    G, b = X.T @ X, X.T @ y
    cold = nnls_gram(G, b)
    np.testing.assert_allclose(cold, nnls_solve(X, y), atol=1e-10)
    for guess in (np.ones(6, bool), np.zeros(6, bool), np.array([0, 1, 0, 1, 0, 1], bool)):
        np.testing.assert_allclose(nnls_gram(G, b, passive=guess), cold, atol=1e-10)


def test_regression_target_and_prediction(rng):
    heats = small_heats(rng, T=10, n=3, slag=True)
    t_lin = regression_target(heats, CU)
    np.testing.assert_allclose(t_lin, heats.m_steel * heats.f_steel - heats.m_hm * heats.f_hm)
    t_slag = regression_target(heats, CR, fixed_ell=10.0)
    np.testing.assert_allclose(t_slag, heats.f_steel * (heats.m_steel + 10 * heats.m_slag) - heats.m_hm * heats.f_hm)
    alpha = np.full((10, 3), 5e-4)
    pred = predict_from_alpha(alpha, heats, CR)
    expected = (heats.scrap_mass.sum(1) * 5e-4 + heats.m_hm * heats.f_hm) / (heats.m_steel + 10 * heats.m_slag)
    np.testing.assert_allclose(pred, expected)


def _noiseless(rng, T, n, beta):
    heats = small_heats(rng, T=T, n=n)
    y = (heats.scrap_mass @ beta + heats.m_hm * heats.f_hm) / heats.m_steel
    return heats.replace(f_steel=y)


def test_windowed_exact_recovery(rng):
    beta = np.array([3e-4, 0.0, 8e-4, 1e-4])
    heats = _noiseless(rng, 200, 4, beta)
    res = windowed_nnls(heats, CU, WindowConfig(window=50))
    assert np.isnan(res.alpha_hat[:50]).all()
    np.testing.assert_allclose(res.alpha_hat[50:], np.broadcast_to(beta, (150, 4)), rtol=1e-8, atol=1e-8 * beta.max())
    np.testing.assert_allclose(res.predicted_f_steel[50:], heats.f_steel[50:], rtol=1e-8)
    assert res.has_estimate.sum() == 150


def test_windowed_incremental_matches_rebuild(rng):
    heats = small_heats(rng, T=300, n=4, missing=(60, 61, 120))
    cfg = WindowConfig(window=40)
    a = windowed_nnls(heats, CU, cfg, refresh=1)
    b = windowed_nnls(heats, CU, cfg, refresh=10_000)
    np.testing.assert_allclose(b.alpha_hat[40:], a.alpha_hat[40:], rtol=1e-7, atol=1e-12)
    np.testing.assert_array_equal(a.n_rows, b.n_rows)
    # the window for position 100 is rows 60..99, which holds both missing rows
    assert (a.n_rows[60], a.n_rows[61], a.n_rows[100], a.n_rows[101]) == (40, 39, 38, 39)
    # only the window contents matter: direct solve at one position
    t = 150
    X = heats.scrap_mass[t - 40:t]
    y = regression_target(heats, CU)[t - 40:t]
    ok = ~np.isnan(y)
    np.testing.assert_allclose(a.alpha_hat[t], nnls_solve(X[ok], y[ok]), rtol=1e-6, atol=1e-12)


def test_windowed_flags_unused_types(rng):
    heats = small_heats(rng, T=120, n=3)
    sm = heats.scrap_mass.copy()
    sm[:80, 2] = 0.0
    sm[80:, 2] = 5e3
    heats = heats.replace(scrap_mass=sm)
    res = windowed_nnls(heats, CU, WindowConfig(window=30))
    assert res.has_estimate[30:].all()
    assert res.unidentifiable[30:80, 2].all()
    assert (res.alpha_hat[30:80, 2] == 0).all()
    assert not res.unidentifiable[111:, 2].any()


def test_windowed_stride_reuses_estimates(rng):
    heats = small_heats(rng, T=100, n=3)
    res = windowed_nnls(heats, CU, WindowConfig(window=20, stride=5))
    np.testing.assert_array_equal(res.alpha_hat[21], res.alpha_hat[20])
    full = windowed_nnls(heats, CU, WindowConfig(window=20))
    np.testing.assert_allclose(res.alpha_hat[25], full.alpha_hat[25], rtol=1e-8, atol=1e-14)


def test_window_config_validation():
    with pytest.raises(DomainError):
        WindowConfig(window=0)
    with pytest.raises(DomainError):
        WindowConfig(window=10, min_rows=11)
    assert WindowConfig(window=10).min_rows == 1


def test_ols_init_matches_nnls_when_feasible(rng):
    beta = np.array([3e-4, 2e-4, 8e-4])
    heats = _noiseless(rng, 100, 3, beta)
    np.testing.assert_allclose(ols_init(heats, CU), beta, rtol=1e-8)
    np.testing.assert_allclose(ols_init(heats, CU, method="nnls"), beta, rtol=1e-8)
    np.testing.assert_allclose(ols_init(heats, CU, n_heats=20), beta, rtol=1e-8)


def test_ols_init_clamps_and_floors(rng):
    # a negative true coefficient: OLS recovers it, the clamp zeroes it, the floor lifts it
    heats = _noiseless(rng, 100, 3, np.array([3e-4, -2e-5, 8e-4]))
    q = ols_init(heats, CU, floor=1e-7)
    assert q[1] == 1e-7 and (q > 0).all()


def test_ols_init_rank_warning(rng):
    heats = _noiseless(rng, 50, 3, np.array([3e-4, 2e-4, 8e-4]))
    sm = heats.scrap_mass.copy()
    sm[:, 2] = sm[:, 1]
    heats = heats.replace(scrap_mass=sm)
    with pytest.warns(RuntimeWarning, match="rank"):
        ols_init(heats, CU)


def test_ols_init_needs_observations(rng):
    heats = small_heats(rng, T=5, n=2, missing=range(5))
    with pytest.raises(DomainError):
        ols_init(heats, CU)


def test_windowed_min_rows_skips_thin_windows(rng):
    heats = small_heats(rng, T=60, n=2, missing=(25,))
    res = windowed_nnls(heats, CU, WindowConfig(window=20, min_rows=20))
    # windows starting at rows 6..25 contain row 25 -> positions 26..45 have 19 rows
    assert not res.has_estimate[26:46].any()
    assert res.has_estimate[20:26].all() and res.has_estimate[46:].all()
