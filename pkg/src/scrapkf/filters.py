"""Kalman and unscented Kalman steps for the scrap-composition state.

Both filters differ from the textbook versions only in the prediction step:
the process noise has mean ``q`` (not zero), so the predicted mean moves
towards ``q`` with weight ``gamma``.

Sigma points are ``a +/- sqrt(m + k) * A[:, i]`` with ``A`` the lower
Cholesky factor of the covariance; the square root multiplies the column,
it is not taken of the column entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .exceptions import DecompositionError, DomainError, NumericalFailure
from .model import ElementSpec, GaussianBelief, HeatRecord, Heats, NoiseSpec
from .validation import check_heats

DEFAULT_K = 3.0
_TINY = 1e-300
JITTER_STEPS = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


class StepResult(NamedTuple):
    posterior: GaussianBelief
    next_prior: GaussianBelief
    innovation: float
    innovation_variance: float
    reflected: int = 0


@dataclass(frozen=True, eq=False)
class SigmaPointSet:
    """``2m + 1`` points (rows of ``points``) with their weights."""

    points: np.ndarray
    weights: np.ndarray
    k: float

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    @property
    def cov(self) -> np.ndarray:
        d = self.points - self.points[0]
        return (self.weights[:, None] * d).T @ d


# --------------------------------------------------------------------------
# Linear algebra helpers
# --------------------------------------------------------------------------


def cholesky_psd(P):
    """Lower Cholesky factor of a symmetric PSD matrix, with escalating jitter.

    Returns ``(A, jitter)`` where ``jitter`` is the amount added to the
    diagonal (0.0 when the plain factorisation succeeded).  The jitter is
    ``delta * trace(P) / m`` with ``delta`` from 1e-12 up to 1e-8.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DomainError("P must be a square matrix")
    try:
        return np.linalg.cholesky(P), 0.0
    except np.linalg.LinAlgError:
        pass
    m = P.shape[0]
    base = np.trace(P) / m
    if not base > 0:
        raise DecompositionError("matrix has non-positive trace; cannot regularise")
    eye = np.eye(m)
    for delta in JITTER_STEPS:
        jitter = delta * base
        try:
            return np.linalg.cholesky(P + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise DecompositionError(f"matrix not positive semidefinite even with jitter {JITTER_STEPS[-1]} * trace/m")


def resolve_k(k, m: int) -> float:
    """Spread parameter; ``"m+k=3"`` selects ``k = 3 - m``."""
    if isinstance(k, str):
        if k.replace(" ", "") != "m+k=3":
            raise DomainError(f"unknown k rule {k!r}")
        return 3.0 - m
    return float(k)


def sigma_points(a, A, k: float = DEFAULT_K) -> SigmaPointSet:
    a = np.asarray(a, dtype=float).reshape(-1)
    A = np.asarray(A, dtype=float)
    m = a.size
    k = resolve_k(k, m)
    if not m + k > 0:
        raise DomainError(f"m + k must be positive (m={m}, k={k})")
    scaled = np.sqrt(m + k) * A.T  # row i is sqrt(m+k) * A[:, i]
    points = np.vstack([a, a + scaled, a - scaled])
    weights = np.full(2 * m + 1, 1.0 / (2.0 * (m + k)))
    weights[0] = k / (m + k)
    return SigmaPointSet(points, weights, k)


# --------------------------------------------------------------------------
# Array-level kernels (used by run_filter and by the public step functions)
# --------------------------------------------------------------------------


def _predict(a, P, gamma, q, Qd):
    a_next = (1.0 - gamma) * a + gamma * q
    P_next = (1.0 - gamma) ** 2 * P
    P_next[np.diag_indices_from(P_next)] += gamma ** 2 * Qd
    return a_next, P_next


def _kf_update(a, P, m, y, H):
    Pm = P @ m
    s = float(m @ Pm) + H
    if not s > _TINY:
        raise NumericalFailure(f"innovation variance {s!r} is not positive")
    K = Pm / s
    v = y - float(m @ a)
    a_post = a + K * v
    P_post = P - np.outer(K, Pm)
    P_post = 0.5 * (P_post + P_post.T)
    return a_post, P_post, v, s


def observation_mass(x, scrap_mass, m_hm, f_hm, m_steel, m_slag, f_feon):
    """Element mass in the steel for augmented states ``x`` (rows ``[alpha, c1, c2]``).

    Returns ``(Z, n_reflected)``.  Sigma points whose partition coefficient
    ``c1 + c2 f_feon`` is negative are evaluated at its mirror image
    ``|c1 + c2 f_feon|``; the count of such points is reported.
    """
    x = np.atleast_2d(x)
    n = scrap_mass.size
    num = x[:, :n] @ scrap_mass + m_hm * f_hm
    ell = x[:, n] + x[:, n + 1] * f_feon
    neg = ell < 0
    n_reflected = int(neg.sum())
    if n_reflected:
        ell = np.abs(ell)
    return num / (1.0 + ell * m_slag / m_steel), n_reflected


def _ukf_update(a, P, heat_cols, y, H, k):
    scrap_mass, m_hm, f_hm, m_steel, m_slag, f_feon = heat_cols
    A, jitter = cholesky_psd(P)
    sp = sigma_points(a, A, k)
    Zx, n_reflected = observation_mass(sp.points, scrap_mass, m_hm, f_hm, m_steel, m_slag, f_feon)
    w = sp.weights
    ybar = float(w @ Zx)
    dZ = Zx - ybar
    P_av = (w * dZ) @ (sp.points - a)
    P_vv = float(w @ dZ ** 2) + H
    if not P_vv > _TINY:
        raise NumericalFailure(f"innovation variance {P_vv!r} is not positive")
    v = y - ybar
    gain = P_av / P_vv
    a_post = a + gain * v
    P_post = P - np.outer(gain, P_av)
    P_post = 0.5 * (P_post + P_post.T)
    return a_post, P_post, v, P_vv, n_reflected, jitter


def _heat_cols(heat: HeatRecord):
    if heat.m_steel <= 0:
        raise DomainError("m_steel must be positive")
    f_feon = heat.f_feon_slag
    if f_feon is None:
        raise DomainError("f_feon_slag is required by the slag observation model")
    return (np.asarray(heat.scrap_mass, dtype=float), heat.m_hm, heat.f_hm, heat.m_steel, heat.m_slag, f_feon)


# --------------------------------------------------------------------------
# Public step functions
# --------------------------------------------------------------------------


def predict_only(prior: GaussianBelief, spec: NoiseSpec) -> GaussianBelief:
    """Time update without a measurement."""
    q, Qd = (spec.q, spec.Q) if prior.dim == spec.n_scrap else (spec.q_aug, spec.Q_aug)
    if q.size != prior.dim:
        raise DomainError(f"belief dimension {prior.dim} does not match the noise specification")
    a, P = _predict(prior.mean, prior.cov.copy(), spec.gamma, q, Qd)
    return GaussianBelief(a, P)


def kalman_step(prior: GaussianBelief, heat: HeatRecord, spec: NoiseSpec) -> StepResult:
    """One measurement update followed by the shifted-mean prediction.

    A heat without ``f_steel`` skips the update (posterior = prior).
    """
    if prior.dim != spec.n_scrap or heat.scrap_mass.size != spec.n_scrap:
        raise DomainError("dimension mismatch between belief, heat and noise specification")
    if not heat.has_observation:
        return StepResult(prior, predict_only(prior, spec), float("nan"), float("nan"))
    if heat.m_steel <= 0:
        raise DomainError("m_steel must be positive")
    y = heat.m_steel * heat.f_steel - heat.m_hm * heat.f_hm
    a_post, P_post, v, s = _kf_update(prior.mean, prior.cov, heat.scrap_mass, y, spec.H)
    a_next, P_next = _predict(a_post, P_post.copy(), spec.gamma, spec.q, spec.Q)
    return StepResult(GaussianBelief(a_post, P_post), GaussianBelief(a_next, P_next), v, s)


def ukf_step(prior: GaussianBelief, heat: HeatRecord, spec: NoiseSpec, k=DEFAULT_K) -> StepResult:
    """Unscented update on the augmented state ``[alpha, c1, c2]``, then prediction."""
    if not spec.augmented or prior.dim != spec.q_aug.size:
        raise DomainError("ukf_step needs an augmented belief and q_c/Q_c in the noise specification")
    if heat.scrap_mass.size != spec.n_scrap:
        raise DomainError("heat scrap vector does not match the noise specification")
    if not heat.has_observation:
        return StepResult(prior, predict_only(prior, spec), float("nan"), float("nan"))
    cols = _heat_cols(heat)
    y = heat.m_steel * heat.f_steel
    a_post, P_post, v, P_vv, n_ref, _ = _ukf_update(prior.mean, prior.cov, cols, y, spec.H, k)
    a_next, P_next = _predict(a_post, P_post.copy(), spec.gamma, spec.q_aug, spec.Q_aug)
    return StepResult(GaussianBelief(a_post, P_post), GaussianBelief(a_next, P_next), v, P_vv, n_ref)


def _fraction_parts(a, n_scrap, scrap_mass, m_hm, f_hm, m_steel, m_slag, f_feon, slag: bool):
    num = float(np.dot(scrap_mass, a[:n_scrap])) + m_hm * f_hm
    den = m_steel
    if slag:
        den = m_steel + m_slag * (a[n_scrap] + a[n_scrap + 1] * f_feon)
    return num, den


def predict_steel_fraction(prior: GaussianBelief, heat: HeatRecord, element: ElementSpec) -> float:
    """Steel element fraction implied by the prior mean and the heat's masses.

    ``heat.f_steel`` is never read.
    """
    if heat.m_steel <= 0:
        raise DomainError("m_steel must be positive")
    n = heat.scrap_mass.size
    if element.transfers_to_slag:
        if prior.dim != n + 2:
            raise DomainError("slag elements need an augmented belief")
        if heat.f_feon_slag is None:
            raise DomainError("f_feon_slag is required by the slag observation model")
    num, den = _fraction_parts(prior.mean, n, heat.scrap_mass, heat.m_hm, heat.f_hm, heat.m_steel,
                               heat.m_slag, heat.f_feon_slag, element.transfers_to_slag)
    if not den > 0:
        raise NumericalFailure(f"non-positive denominator {den!r} in steel-fraction prediction")
    return num / den


# --------------------------------------------------------------------------
# Driver
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FilterTrace:
    """Per-heat record of a filter run.

    Means and variances (covariance diagonals) are always kept; full
    covariances only when the run was made with ``store_cov=True``.
    ``predicted_numerator`` / ``predicted_denominator`` hold the two parts of
    the steel-fraction prediction in kg (denominator is ``m_steel`` for
    linear elements).
    """

    mode: str
    n_scrap: int
    heat_index: np.ndarray
    prior_mean: np.ndarray
    prior_var: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray
    innovation: np.ndarray
    innovation_variance: np.ndarray
    predicted_f_steel: np.ndarray
    predicted_numerator: np.ndarray
    predicted_denominator: np.ndarray
    reflected: np.ndarray
    jitter: np.ndarray
    final_prior: GaussianBelief
    prior_cov: Optional[np.ndarray] = None
    post_cov: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.heat_index.size

    @property
    def negative_prediction(self) -> np.ndarray:
        """Diagnostic flag: predicted fraction below zero (never clamped)."""
        return self.predicted_f_steel < 0

    def prior(self, t: int) -> GaussianBelief:
        cov = self.prior_var[t] if self.prior_cov is None else self.prior_cov[t]
        return GaussianBelief(self.prior_mean[t], cov)

    def posterior(self, t: int) -> GaussianBelief:
        cov = self.post_var[t] if self.post_cov is None else self.post_cov[t]
        return GaussianBelief(self.post_mean[t], cov)

    def next_prior(self, t: int) -> GaussianBelief:
        return self.final_prior if t == len(self) - 1 else self.prior(t + 1)


def run_filter(
    heats: Union[Heats, list],
    spec: NoiseSpec,
    element: ElementSpec,
    init: Optional[GaussianBelief] = None,
    k=DEFAULT_K,
    store_cov: bool = False,
) -> FilterTrace:
    """Filter a heat stream in order.

    For each heat the prior and the steel-fraction prediction are recorded
    before the heat's measurement is used.  Heats without ``f_steel`` only
    get the time update.  ``element.transfers_to_slag`` selects the
    unscented filter on ``[alpha, c1, c2]``; otherwise the Kalman filter on
    ``alpha``.  ``init`` defaults to ``a_1 = q`` (plus ``q_c``) and
    ``P_1 = Q`` (block-diagonal with ``Q_c``).
    """
    slag = element.transfers_to_slag
    heats = check_heats(heats, n_scrap=spec.n_scrap if len(heats) else None, require_slag=slag)
    n = spec.n_scrap
    if slag:
        if not spec.augmented:
            raise DomainError("slag-transferring elements need q_c and Q_c")
        q, Qd = spec.q_aug, spec.Q_aug
    else:
        q, Qd = spec.q, spec.Q
    dim = q.size
    if init is None:
        init = GaussianBelief(q, np.diag(Qd))
    elif init.dim != dim:
        raise DomainError(f"initial belief has dimension {init.dim}, expected {dim}")

    T = len(heats)
    prior_mean = np.empty((T, dim))
    prior_var = np.empty((T, dim))
    post_mean = np.empty((T, dim))
    post_var = np.empty((T, dim))
    innovation = np.full(T, np.nan)
    innovation_variance = np.full(T, np.nan)
    pred = np.empty(T)
    num_arr = np.empty(T)
    den_arr = np.empty(T)
    reflected = np.zeros(T, dtype=np.int64)
    jitter_arr = np.zeros(T)
    prior_cov = np.empty((T, dim, dim)) if store_cov else None
    post_cov = np.empty((T, dim, dim)) if store_cov else None

    a = init.mean.copy()
    P = init.cov.copy()
    sm, m_hm, f_hm, m_steel = heats.scrap_mass, heats.m_hm, heats.f_hm, heats.m_steel
    f_steel, m_slag, f_feon = heats.f_steel, heats.m_slag, heats.f_feon_slag
    observed = heats.observed
    for t in range(T):
        prior_mean[t] = a
        prior_var[t] = np.diag(P)
        if store_cov:
            prior_cov[t] = P
        if not m_steel[t] > 0:
            raise DomainError(f"m_steel must be positive (heat position {t})")
        num, den = _fraction_parts(a, n, sm[t], m_hm[t], f_hm[t], m_steel[t], m_slag[t], f_feon[t], slag)
        if not den > 0:
            raise NumericalFailure(f"non-positive denominator in steel-fraction prediction at heat position {t}")
        num_arr[t], den_arr[t], pred[t] = num, den, num / den
        if observed[t]:
            if slag:
                cols = (sm[t], m_hm[t], f_hm[t], m_steel[t], m_slag[t], f_feon[t])
                a, P, v, s, reflected[t], jitter_arr[t] = _ukf_update(a, P, cols, m_steel[t] * f_steel[t], spec.H, k)
            else:
                y = m_steel[t] * f_steel[t] - m_hm[t] * f_hm[t]
                a, P, v, s = _kf_update(a, P, sm[t], y, spec.H)
            innovation[t], innovation_variance[t] = v, s
        post_mean[t] = a
        post_var[t] = np.diag(P)
        if store_cov:
            post_cov[t] = P
        a, P = _predict(a, P.copy(), spec.gamma, q, Qd)

    return FilterTrace(
        mode="ukf" if slag else "kalman",
        n_scrap=n,
        heat_index=heats.heat_index.copy(),
        prior_mean=prior_mean,
        prior_var=prior_var,
        post_mean=post_mean,
        post_var=post_var,
        innovation=innovation,
        innovation_variance=innovation_variance,
        predicted_f_steel=pred,
        predicted_numerator=num_arr,
        predicted_denominator=den_arr,
        reflected=reflected,
        jitter=jitter_arr,
        final_prior=GaussianBelief(a, 0.5 * (P + P.T)),
        prior_cov=prior_cov,
        post_cov=post_cov,
    )
