"""Seeded synthetic data: state trajectories, partition coefficients and noisy heats.

Every dataset is driven by one master seed.  Independent child streams are
derived for the heat masses, the element-fraction state, the partition
coefficients and the observation noise, so switching one of them off (for
example generating a linear element, which has no partition stream) leaves
the other draws untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, GenerationError
from .model import ElementSpec, Heats, NoiseSpec, ScrapCatalog, as_diagonal, beta_params_from_moments
from .validation import check_heats

STREAMS = ("masses", "state", "partition", "observation")


def stream_rngs(seed: int) -> dict:
    """Named child generators derived from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(STREAMS, children)}


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    """Generated heats together with the ground truth that produced them."""

    catalog: ScrapCatalog
    element: ElementSpec
    heats: Heats
    truth_alpha: np.ndarray
    truth_c: Optional[np.ndarray]
    y: np.ndarray
    seed: Optional[int]
    noise: NoiseSpec

    def __len__(self):
        return len(self.heats)


# --------------------------------------------------------------------------
# Process noise and state trajectories
# --------------------------------------------------------------------------


def sample_beta_vector(q, Q, rng, size=None) -> np.ndarray:
    """Draw ``eta`` with independent ``Beta(u_i, v_i)`` components of mean ``q_i``, variance ``Q_ii``.

    Components with ``Q_ii == 0`` are degenerate and return ``q_i``.
    ``size`` prepends batch dimensions.
    """
    rng = _rng(rng)
    q = np.asarray(q, dtype=float).reshape(-1)
    Qd = as_diagonal(Q)
    shape = q.shape if size is None else tuple(np.atleast_1d(size)) + q.shape
    degenerate = Qd == 0
    out = np.broadcast_to(q, shape).copy()
    if not np.all(degenerate):
        live = ~degenerate
        u, v = beta_params_from_moments(q[live], Qd[live])
        out[..., live] = rng.beta(u, v, size=shape[:-1] + (int(live.sum()),))
    return out


def generate_state_trajectory(alpha1, gamma: float, q, Q, T: int, rng) -> np.ndarray:
    """Simulate ``alpha[t+1] = (1 - gamma) alpha[t] + gamma eta[t]`` for ``T`` heats.

    ``alpha1`` may carry leading batch dimensions (independent trajectories);
    the result has shape ``(T,) + alpha1.shape``.
    """
    rng = _rng(rng)
    alpha1 = np.asarray(alpha1, dtype=float)
    if T < 1:
        raise DomainError("T must be at least 1")
    if np.any(alpha1 < 0) or np.any(alpha1 > 1):
        raise DomainError("alpha1 must lie in [0, 1]")
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise DomainError("gamma must lie in [0, 1]")
    q = np.asarray(q, dtype=float)
    out = np.empty((T,) + alpha1.shape)
    out[0] = alpha1
    if alpha1.ndim == 1:
        eta = sample_beta_vector(q, Q, rng, size=T - 1) if T > 1 else np.empty((0,) + q.shape)
        for t in range(T - 1):
            out[t + 1] = (1.0 - gamma) * out[t] + gamma * eta[t]
    else:
        batch = alpha1.shape[:-1]
        for t in range(T - 1):
            out[t + 1] = (1.0 - gamma) * out[t] + gamma * sample_beta_vector(q, Q, rng, size=batch)
    return out


def generate_partition_trajectory(c1, gamma: float, q_c, Q_c, T: int, rng) -> np.ndarray:
    """Partition parameters ``c[t+1] = c[t] + gamma (theta[t] - c[t])``, ``theta ~ N(q_c, Q_c)``.

    Returns an array of shape ``(T, len(q_c))``.  Pass ``c1=None`` to start
    at ``q_c``.
    """
    rng = _rng(rng)
    if T < 1:
        raise DomainError("T must be at least 1")
    q_c = np.asarray(q_c, dtype=float).reshape(-1)
    sd = np.sqrt(as_diagonal(Q_c, "Q_c"))
    c = np.empty((T, q_c.size))
    c[0] = q_c if c1 is None else np.asarray(c1, dtype=float)
    theta = rng.normal(q_c, sd, size=(T - 1, q_c.size))
    for t in range(T - 1):
        c[t + 1] = c[t] + gamma * (theta[t] - c[t])
    return c


# --------------------------------------------------------------------------
# Observations
# --------------------------------------------------------------------------


def _input_mass(truth_alpha, heats: Heats) -> np.ndarray:
    truth_alpha = np.asarray(truth_alpha, dtype=float)
    if truth_alpha.shape != heats.scrap_mass.shape:
        raise DomainError(f"truth shape {truth_alpha.shape} does not match scrap masses {heats.scrap_mass.shape}")
    return np.einsum("ij,ij->i", heats.scrap_mass, truth_alpha) + heats.m_hm * heats.f_hm


def _finish(heats: Heats, f_steel: np.ndarray) -> Heats:
    bad = np.flatnonzero(~((f_steel >= 0) & (f_steel <= 1)))
    if bad.size:
        raise GenerationError(f"generated f_steel outside [0, 1] at heat position {bad[0]}")
    return heats.replace(f_steel=f_steel)


def synthesize_linear(truth_alpha, heats: Heats, H: float, rng):
    """Noisy observations for an element that stays in the steel.

    Returns ``(heats_with_f_steel, y)`` with ``y = m . alpha + eps`` and
    ``f_steel = (m . alpha + m_hm f_hm + eps) / m_steel``.
    """
    rng = _rng(rng)
    if np.any(heats.m_steel <= 0):
        raise GenerationError("m_steel must be positive to form an observation")
    eps = rng.normal(0.0, np.sqrt(H), size=len(heats))
    scrap = np.einsum("ij,ij->i", heats.scrap_mass, np.asarray(truth_alpha, dtype=float))
    y = scrap + eps
    f_steel = (_input_mass(truth_alpha, heats) + eps) / heats.m_steel
    return _finish(heats, f_steel), y


def synthesize_nonlinear(truth_alpha, truth_c, heats: Heats, H: float, rng):
    """Noisy steel element mass for an element that partitions into the slag.

    Returns ``(heats_with_f_steel, y)`` where ``y`` is the measured element
    mass in the steel (kg) and ``f_steel = y / m_steel``.
    """
    rng = _rng(rng)
    if np.any(heats.m_steel <= 0):
        raise GenerationError("m_steel must be positive to form an observation")
    if np.any(np.isnan(heats.f_feon_slag)):
        raise GenerationError("f_feon_slag is required for slag-transferring elements")
    truth_c = np.asarray(truth_c, dtype=float)
    ell = truth_c[:, 0] + truth_c[:, 1] * heats.f_feon_slag
    denom = 1.0 + ell * heats.m_slag / heats.m_steel
    bad = np.flatnonzero(~(denom > 0))
    if bad.size:
        raise GenerationError(f"invalid partition configuration: non-positive denominator at heat position {bad[0]}")
    eps = rng.normal(0.0, np.sqrt(H), size=len(heats))
    y = _input_mass(truth_alpha, heats) / denom + eps
    return _finish(heats, y / heats.m_steel), y


# --------------------------------------------------------------------------
# Surrogate production records
# --------------------------------------------------------------------------


def surrogate_heats(
    n_heats: int,
    n_scrap: int = 45,
    rng=None,
    f_hm: float = 30e-6,
    f_hm_rel_sd: float = 0.2,
    hot_metal: bool = True,
    featured: Optional[int] = 35,
    campaign_gap=(1500.0, 4000.0),
    campaign_length=(30, 300),
    tier_weights=(0.25, 0.45, 0.30),
) -> Heats:
    """Plausible BOF-like heat masses for users without production data.

    Each scrap type gets a usage tier.  Staples are always available,
    regular types have a few long activity windows (rare use outside them)
    and occasional types arrive in short campaigns separated by idle gaps
    of ``campaign_gap`` heats on average.
    Scrap type ``featured`` (0-based) is used frequently in the first half
    and almost never in the second.  Per-heat scrap totals are log-normal
    around 75 t, hot metal around 280 t, slag around 35 t; steel is 92% of
    the metallic charge.  Set ``hot_metal=False`` for an EAF (``m_hm = 0``).
    """
    rng = _rng(rng)
    T, N = int(n_heats), int(n_scrap)
    if T < 0 or N < 1:
        raise DomainError("need n_heats >= 0 and n_scrap >= 1")

    tier = rng.choice(3, size=N, p=np.asarray(tier_weights, float) / np.sum(tier_weights))
    p_base = np.where(tier == 0, rng.uniform(0.5, 0.9, N),
                      np.where(tier == 1, rng.uniform(0.1, 0.4, N), rng.uniform(0.01, 0.06, N)))
    t_axis = np.arange(T)
    prob = np.empty((T, N))
    for i in range(N):
        active = np.zeros(T, bool)
        if tier[i] == 0:
            active[:] = True
        elif tier[i] == 1:
            for _ in range(rng.integers(1, 4)):
                length = int(rng.uniform(0.15, 0.6) * T)
                start = int(rng.integers(0, max(T - length, 1)))
                active[start:start + length] = True
        else:
            # occasional lots: short campaigns separated by long idle gaps
            mean_gap = rng.uniform(*campaign_gap)
            t = int(rng.exponential(mean_gap))
            while t < T:
                length = int(rng.uniform(*campaign_length))
                active[t:t + length] = True
                t += length + int(rng.exponential(mean_gap))
            p_base[i] = rng.uniform(0.2, 0.6)
            prob[:, i] = np.where(active, p_base[i], 0.0)
            continue
        prob[:, i] = np.where(active, p_base[i], 0.02 * p_base[i])
    if featured is not None and featured < N:
        prob[:, featured] = np.where(t_axis < T // 2, 0.6, 0.01)

    used = rng.random((T, N)) < prob
    empty = ~used.any(axis=1)
    used[empty, int(np.argmax(p_base))] = True
    median = np.exp(rng.uniform(np.log(2e3), np.log(15e3), N))
    raw = used * median * np.exp(rng.normal(0.0, 0.35, (T, N)))
    total = 75e3 * np.exp(rng.normal(0.0, 0.12, T))
    scrap = raw * (total / raw.sum(axis=1))[:, None]

    m_hm = 280e3 * np.exp(rng.normal(0.0, 0.03, T)) if hot_metal else np.zeros(T)
    m_steel = 0.92 * (m_hm + scrap.sum(axis=1)) * np.exp(rng.normal(0.0, 0.01, T))
    m_slag = 35e3 * np.exp(rng.normal(0.0, 0.15, T))
    u, v = beta_params_from_moments(0.22, 0.04 ** 2)
    f_feon = rng.beta(u, v, size=T)
    f_hm_col = f_hm * np.exp(rng.normal(0.0, f_hm_rel_sd, T)) if hot_metal else np.zeros(T)
    return Heats(
        heat_index=np.arange(1, T + 1),
        scrap_mass=scrap,
        m_hm=m_hm,
        f_hm=f_hm_col,
        m_steel=m_steel,
        f_steel=np.full(T, np.nan),
        m_slag=m_slag,
        f_feon_slag=f_feon,
    )


def make_dataset(
    element: ElementSpec,
    noise: NoiseSpec,
    seed: int,
    heats: Optional[Heats] = None,
    n_heats: int = 20000,
    catalog: Optional[ScrapCatalog] = None,
    alpha1=None,
    f_hm: Optional[float] = None,
) -> SyntheticDataset:
    """Generate a complete synthetic dataset.

    Without ``heats`` the surrogate mass generator is used.  The state starts
    at ``alpha1`` (default ``q``) and the partition parameters at ``q_c``.
    """
    rngs = stream_rngs(seed)
    N = noise.n_scrap
    if heats is None:
        if f_hm is None:
            from .presets import HOT_METAL_PPM

            f_hm = HOT_METAL_PPM.get(element.element_id, 30.0) * 1e-6
        heats = surrogate_heats(n_heats, N, rngs["masses"], f_hm=f_hm)
    else:
        heats = check_heats(heats, n_scrap=N, require_slag=element.transfers_to_slag)
    catalog = catalog or ScrapCatalog.numbered(N)
    if len(catalog) != N:
        raise DomainError("catalog size does not match the noise specification")
    T = len(heats)
    if T == 0:
        raise GenerationError("cannot generate a dataset without heats")
    beta_params_from_moments(noise.q, noise.Q)
    a1 = noise.q if alpha1 is None else np.asarray(alpha1, dtype=float)
    truth_alpha = generate_state_trajectory(a1, noise.gamma, noise.q, noise.Q, T, rngs["state"])
    truth_c = None
    if element.transfers_to_slag:
        if not noise.augmented:
            raise GenerationError("slag-transferring elements need q_c and Q_c")
        truth_c = generate_partition_trajectory(None, noise.gamma, noise.q_c, noise.Q_c, T, rngs["partition"])
        heats, y = synthesize_nonlinear(truth_alpha, truth_c, heats, noise.H, rngs["observation"])
    else:
        heats, y = synthesize_linear(truth_alpha, heats, noise.H, rngs["observation"])
    return SyntheticDataset(catalog, element, heats, truth_alpha, truth_c, y, seed, noise)
