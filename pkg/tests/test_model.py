import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrapkf import presets
from scrapkf.exceptions import DomainError, MomentMatchingError
from scrapkf.model import (
    GaussianBelief,
    HeatRecord,
    Heats,
    NoiseSpec,
    PartitionModel,
    ScrapCatalog,
    as_diagonal,
    beta_params_from_moments,
    estimate_obs_variance_linear,
    gamma_from_half_life,
    process_noise_from_stationary,
    propagate_moments,
    stationary_covariance,
)


def test_gamma_half_life_1000():
    g = gamma_from_half_life(1000)
    assert g == pytest.approx(6.931471805599453e-4, rel=1e-15)
    # after h steps the deviation from q is halved to first order: (1-g)^h ~ 1/2
    assert (1 - g) ** 1000 == pytest.approx(0.5, rel=1e-3)


def test_gamma_half_life_rejects_nonpositive():
    with pytest.raises(DomainError):
        gamma_from_half_life(0)
    with pytest.raises(DomainError):
        gamma_from_half_life(-3)


def test_stationary_roundtrip_and_values():
    g = 0.2
    Q = np.array([1.0, 4.0])
    # g/(2-g) = 0.2/1.8 = 1/9
    np.testing.assert_allclose(stationary_covariance(g, Q), Q / 9, rtol=1e-15)
    np.testing.assert_allclose(process_noise_from_stationary(g, Q / 9), Q, rtol=1e-14)


def test_synthetic_Q_is_about_five_q_squared():
    g = gamma_from_half_life(1000)
    q = 208.8e-6
    Q = process_noise_from_stationary(g, (0.042 * q) ** 2)
    # (2 - g)/g * 0.042^2 = 5.0888...
    assert Q / q ** 2 == pytest.approx((2 - g) / g * 0.042 ** 2, rel=1e-12)
    assert 5.08 < Q / q ** 2 < 5.10


def test_stationary_rejects_gamma_zero():
    with pytest.raises(DomainError):
        stationary_covariance(0.0, [1.0])


def test_beta_params_hand_computed():
    # q = 0.5, Q = 0.05: u = 0.25*0.5/0.05 - 0.5 = 2, v = 2/0.5 - 2 = 2
    u, v = beta_params_from_moments(0.5, 0.05)
    assert (u, v) == pytest.approx((2.0, 2.0), rel=1e-14)
    # back to moments: mean u/(u+v), var uv/((u+v)^2 (u+v+1))
    assert u / (u + v) == pytest.approx(0.5)
    assert u * v / ((u + v) ** 2 * (u + v + 1)) == pytest.approx(0.05)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 0.99), st.floats(1e-4, 0.999))
def test_beta_params_reproduce_moments(q, frac):
    Q = frac * q * (1 - q)
    u, v = beta_params_from_moments(q, Q)
    assert u / (u + v) == pytest.approx(q, rel=1e-9)
    assert u * v / ((u + v) ** 2 * (u + v + 1)) == pytest.approx(Q, rel=1e-8)


def test_beta_params_infeasible_names_index():
    q = np.array([0.1, 0.2, 0.3])
    Q = np.array([0.001, 0.2 * 0.8, 0.001])  # index 1 sits exactly on the boundary
    with pytest.raises(MomentMatchingError) as exc:
        beta_params_from_moments(q, Q)
    assert exc.value.index == 1
    assert "index 1" in str(exc.value)


def test_propagate_moments_matches_recursion():
    rng = np.random.default_rng(0)
    n = 3
    a1 = rng.uniform(0, 1e-3, n)
    B = rng.normal(size=(n, n)) * 1e-4
    P1 = B @ B.T
    q = rng.uniform(0, 1e-3, n)
    Q = rng.uniform(0, 1e-7, n)
    g = 0.03
    a, P = a1.copy(), P1.copy()
    for t in range(1, 60):
        a = (1 - g) * a + g * q
        P = (1 - g) ** 2 * P + g ** 2 * np.diag(Q)
        at, Pt = propagate_moments(a1, P1, g, q, Q, t)
        np.testing.assert_allclose(at, a, rtol=1e-12)
        np.testing.assert_allclose(Pt, P, rtol=1e-10, atol=1e-25)


def test_propagate_moments_limits_and_edges():
    q, Q = np.array([0.2]), np.array([0.01])
    a, P = propagate_moments(np.array([0.7]), np.array([0.3]), 0.1, q, Q, 2000)
    np.testing.assert_allclose(a, q, rtol=1e-12)
    np.testing.assert_allclose(P, 0.1 / 1.9 * Q, rtol=1e-12)
    # gamma = 0 freezes, gamma = 1 jumps to the noise moments
    a, P = propagate_moments(np.array([0.7]), np.array([0.3]), 0.0, q, Q, 50)
    assert a[0] == 0.7 and P[0] == 0.3
    a, P = propagate_moments(np.array([0.7]), np.array([0.3]), 1.0, q, Q, 5)
    assert a[0] == pytest.approx(0.2) and P[0] == pytest.approx(0.01)
    a, P = propagate_moments(np.array([0.7]), np.array([0.3]), 0.5, q, Q, 0)
    assert a[0] == 0.7


def test_as_diagonal_rejects_offdiagonal():
    with pytest.raises(DomainError):
        as_diagonal(np.array([[1.0, 0.1], [0.1, 1.0]]))
    np.testing.assert_array_equal(as_diagonal(np.diag([1.0, 2.0])), [1.0, 2.0])


def test_noise_spec_validation():
    with pytest.raises(DomainError):
        NoiseSpec(1.5, [0.1], [0.01], 1.0)
    with pytest.raises(DomainError):
        NoiseSpec(0.1, [0.1, 0.2], [0.01], 1.0)
    with pytest.raises(DomainError):
        NoiseSpec(0.1, [0.1], [0.01], -1.0)
    with pytest.raises(DomainError):
        NoiseSpec(0.1, [0.1], [0.01], 1.0, q_c=[9.7, 0.01])
    with pytest.raises(MomentMatchingError):
        NoiseSpec(0.1, [0.5], [0.3], 1.0, beta_sampling=True)
    # gamma = 0 is a legal (frozen) model
    assert NoiseSpec(0.0, [0.1], [0.01], 1.0).gamma == 0.0


def test_noise_spec_dict_roundtrip_and_aug():
    s = NoiseSpec(0.01, [1e-4, 2e-4], np.diag([1e-9, 2e-9]), 17.6, [9.7, 0.01], [0.1, 1e-6])
    assert s.augmented and s.q_aug.tolist() == [1e-4, 2e-4, 9.7, 0.01]
    r = NoiseSpec.from_dict(s.to_dict())
    for f in ("q", "Q", "q_c", "Q_c"):
        np.testing.assert_array_equal(getattr(r, f), getattr(s, f))
    assert (r.gamma, r.H) == (s.gamma, s.H)
    b = s.initial_belief()
    np.testing.assert_array_equal(np.diag(b.cov), s.Q_aug)


def test_obs_variance_cu_and_cr():
    H = estimate_obs_variance_linear(330e3, 12e-6, 280e3, 5e-6)
    # 330^2 * 12^2 + 280^2 * 5^2 g^2 = 15681600 + 1960000 = 17641600 g^2 = 17.6416 kg^2
    assert H == pytest.approx(17.6416, rel=1e-12)
    assert presets.observation_variance("Cu") == pytest.approx(17.6416, rel=1e-12)
    assert presets.observation_variance("Cr") == pytest.approx(1.32 ** 2, rel=1e-12)


def test_presets_reference_entries():
    q = presets.mean_fraction("Cu")
    assert q.size == 45
    assert q[0] == pytest.approx(208.8e-6) and q[44] == pytest.approx(3060.99e-6)
    cr = presets.mean_fraction("Cr")
    assert cr[1] == pytest.approx(900e-6) and cr[44] == pytest.approx(1601.64e-6)
    spec = presets.synthetic_noise_spec("Cr")
    assert spec.q_c.tolist() == [9.7, 0.01]
    np.testing.assert_allclose(spec.P_c_inf, (0.01 * spec.q_c) ** 2, rtol=1e-12)
    np.testing.assert_allclose(spec.P_inf, (0.042 * spec.q) ** 2, rtol=1e-12)


def test_gaussian_belief_checks():
    with pytest.raises(DomainError):
        GaussianBelief([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DomainError):
        GaussianBelief([0.0], [[1.0, 0.0], [0.0, 1.0]])
    b = GaussianBelief([0.0, 1.0], [4.0, 9.0])
    np.testing.assert_array_equal(b.sd, [2.0, 3.0])
    assert not GaussianBelief([0, 0], [[1, 2], [2, 1]]).is_psd()


def test_catalog_and_partition():
    c = ScrapCatalog.numbered(45)
    assert c.scrap_ids[0] == "01" and c.scrap_ids[-1] == "45" and c.index("36") == 35
    with pytest.raises(DomainError):
        ScrapCatalog(("a", "a"))
    p = PartitionModel(9.7, 0.01)
    assert p.ell(0.2) == pytest.approx(9.702)
    p.check_nonnegative()
    with pytest.raises(DomainError):
        PartitionModel(0.5, -1.0).check_nonnegative()


def test_heats_records_roundtrip():
    recs = [
        HeatRecord(1, [1.0, 2.0], 10.0, 1e-5, 12.0, 2e-4),
        HeatRecord(2, [0.0, 3.0], 11.0, 1e-5, 13.0, None, 2.0, 0.2),
    ]
    h = Heats.from_records(recs)
    assert len(h) == 2 and h.n_scrap == 2
    assert h.observed.tolist() == [True, False]
    assert h[1].f_steel is None and h[1].f_feon_slag == 0.2
    assert Heats.from_records(list(h)).equals(h)
    assert h[0:1].equals(Heats.from_records(recs[:1]))
    with pytest.raises(ValueError):
        h.m_hm[0] = 5.0
