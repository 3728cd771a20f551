"""Domain types and closed-form moment recursions.

Conventions used throughout the package:

* masses are kilograms, element fractions are dimensionless (ppm only at
  file and report boundaries);
* the state-update weight ``gamma`` follows ``gamma = ln 2 / half_life``;
* process-noise covariances are diagonal and stored as 1-D arrays holding
  the diagonal.

The state evolves as a convex combination
``alpha[t+1] = (1 - gamma) * alpha[t] + gamma * eta[t]`` with
``E[eta] = q`` and ``Var[eta] = Q``, which keeps fractions inside [0, 1] and
gives the bounded long-run covariance ``gamma / (2 - gamma) * Q``.  (A plain
random walk would let the variance grow linearly without bound.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .exceptions import DomainError, MomentMatchingError

__all__ = [
    "ElementSpec",
    "ScrapCatalog",
    "HeatRecord",
    "Heats",
    "GaussianBelief",
    "NoiseSpec",
    "PartitionModel",
    "gamma_from_half_life",
    "stationary_covariance",
    "process_noise_from_stationary",
    "beta_params_from_moments",
    "propagate_moments",
    "estimate_obs_variance_linear",
]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def as_diagonal(Q, name: str = "Q") -> np.ndarray:
    """Return the diagonal of ``Q`` as a 1-D float array.

    Accepts a 1-D diagonal or a 2-D matrix; a 2-D matrix with any non-zero
    off-diagonal entry is rejected.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 0:
        return Q.reshape(1)
    if Q.ndim == 1:
        return Q.copy()
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DomainError(f"{name} must be a square matrix or a diagonal vector")
    d = np.diag(Q).copy()
    if np.any(Q - np.diag(d)):
        raise DomainError(f"{name} must be diagonal")
    return d


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ElementSpec:
    """Chemical element being tracked.

    ``transfers_to_slag`` selects the observation model: ``False`` gives the
    linear mass balance (Cu, Ni), ``True`` the partition-coefficient model
    (Cr, S) fitted with the unscented filter.
    """

    element_id: str
    transfers_to_slag: bool = False

    @classmethod
    def for_symbol(cls, symbol: str) -> "ElementSpec":
        return cls(symbol, symbol in {"Cr", "S"})


@dataclass(frozen=True)
class ScrapCatalog:
    """Ordered scrap-type identifiers; the order indexes every state vector."""

    scrap_ids: tuple
    display_names: Optional[tuple] = None

    def __post_init__(self):
        ids = tuple(str(s) for s in self.scrap_ids)
        object.__setattr__(self, "scrap_ids", ids)
        if len(ids) < 1:
            raise DomainError("a scrap catalog needs at least one scrap type")
        if len(set(ids)) != len(ids):
            raise DomainError("scrap identifiers must be unique")
        if self.display_names is not None:
            names = tuple(self.display_names)
            if len(names) != len(ids):
                raise DomainError("display_names must match scrap_ids in length")
            object.__setattr__(self, "display_names", names)

    @classmethod
    def numbered(cls, n: int) -> "ScrapCatalog":
        width = max(2, len(str(n)))
        return cls(tuple(str(i + 1).zfill(width) for i in range(n)))

    def __len__(self) -> int:
        return len(self.scrap_ids)

    def index(self, scrap_id) -> int:
        return self.scrap_ids.index(str(scrap_id))


@dataclass(frozen=True)
class HeatRecord:
    """One production heat.  ``f_steel`` is ``None`` for pure prediction."""

    heat_index: int
    scrap_mass: np.ndarray
    m_hm: float
    f_hm: float
    m_steel: float
    f_steel: Optional[float] = None
    m_slag: float = 0.0
    f_feon_slag: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "scrap_mass", _frozen(self.scrap_mass).reshape(-1))

    @property
    def has_observation(self) -> bool:
        return self.f_steel is not None and not math.isnan(self.f_steel)


@dataclass(frozen=True, eq=False)
class Heats:
    """Column-oriented sequence of heats.

    Missing ``f_steel`` / ``f_feon_slag`` values are stored as NaN.  Indexing
    with an integer yields a :class:`HeatRecord`; slicing yields ``Heats``.
    """

    heat_index: np.ndarray
    scrap_mass: np.ndarray
    m_hm: np.ndarray
    f_hm: np.ndarray
    m_steel: np.ndarray
    f_steel: np.ndarray
    m_slag: np.ndarray
    f_feon_slag: np.ndarray

    def __post_init__(self):
        sm = np.array(self.scrap_mass, dtype=float)
        if sm.ndim == 1:
            sm = sm.reshape(-1, 1) if sm.size else sm.reshape(0, 1)
        T = sm.shape[0]
        object.__setattr__(self, "scrap_mass", sm)
        object.__setattr__(self, "heat_index", np.array(self.heat_index, dtype=np.int64).reshape(-1))
        for name in ("m_hm", "f_hm", "m_steel", "f_steel", "m_slag", "f_feon_slag"):
            col = np.array(getattr(self, name), dtype=float)
            if col.ndim == 0:
                col = np.full(T, float(col))
            object.__setattr__(self, name, col.reshape(-1))
        for name in ("heat_index", "m_hm", "f_hm", "m_steel", "f_steel", "m_slag", "f_feon_slag"):
            if getattr(self, name).shape[0] != T:
                raise DomainError(f"column {name!r} has {getattr(self, name).shape[0]} rows, expected {T}")
        for name in ("heat_index", "scrap_mass", "m_hm", "f_hm", "m_steel", "f_steel", "m_slag", "f_feon_slag"):
            getattr(self, name).setflags(write=False)

    @classmethod
    def from_records(cls, records: Iterable[HeatRecord], n_scrap: Optional[int] = None) -> "Heats":
        records = list(records)
        if not records:
            return cls.empty(n_scrap or 1)
        nan = float("nan")
        return cls(
            heat_index=[r.heat_index for r in records],
            scrap_mass=np.vstack([r.scrap_mass for r in records]),
            m_hm=[r.m_hm for r in records],
            f_hm=[r.f_hm for r in records],
            m_steel=[r.m_steel for r in records],
            f_steel=[nan if r.f_steel is None else r.f_steel for r in records],
            m_slag=[r.m_slag for r in records],
            f_feon_slag=[nan if r.f_feon_slag is None else r.f_feon_slag for r in records],
        )

    @classmethod
    def empty(cls, n_scrap: int) -> "Heats":
        z = np.zeros(0)
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, n_scrap)), z, z, z, z, z, z)

    @property
    def n_scrap(self) -> int:
        return self.scrap_mass.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask of heats carrying a steel-fraction measurement."""
        return ~np.isnan(self.f_steel)

    def __len__(self) -> int:
        return self.scrap_mass.shape[0]

    def __iter__(self) -> Iterator[HeatRecord]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            i = int(key)
            fs = float(self.f_steel[i])
            fe = float(self.f_feon_slag[i])
            return HeatRecord(
                heat_index=int(self.heat_index[i]),
                scrap_mass=self.scrap_mass[i],
                m_hm=float(self.m_hm[i]),
                f_hm=float(self.f_hm[i]),
                m_steel=float(self.m_steel[i]),
                f_steel=None if math.isnan(fs) else fs,
                m_slag=float(self.m_slag[i]),
                f_feon_slag=None if math.isnan(fe) else fe,
            )
        return Heats(
            self.heat_index[key], self.scrap_mass[key], self.m_hm[key], self.f_hm[key],
            self.m_steel[key], self.f_steel[key], self.m_slag[key], self.f_feon_slag[key],
        )

    def replace(self, **changes) -> "Heats":
        return replace(self, **changes)

    def equals(self, other: "Heats") -> bool:
        """Bitwise equality, treating NaN as equal to NaN."""
        if not isinstance(other, Heats) or len(self) != len(other) or self.n_scrap != other.n_scrap:
            return False
        names = ("heat_index", "scrap_mass", "m_hm", "f_hm", "m_steel", "f_steel", "m_slag", "f_feon_slag")
        return all(np.array_equal(getattr(self, n), getattr(other, n), equal_nan=True) for n in names)


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Mean and covariance of the (possibly augmented) state."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (mean.size, mean.size):
            raise DomainError(f"covariance shape {cov.shape} does not match mean length {mean.size}")
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny) if cov.size else 1.0
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12 * scale:
            raise DomainError("covariance must be symmetric")
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def is_psd(self, rtol: float = 1e-10) -> bool:
        if self.dim == 0:
            return True
        lam = np.linalg.eigvalsh(self.cov)
        return bool(lam.min() >= -rtol * max(np.trace(self.cov), 0.0))


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Hyperparameters of the state-space model.

    ``Q`` and ``Q_c`` are stored as 1-D diagonals.  ``H`` is the observation
    noise variance in kg^2.  With ``beta_sampling=True`` the constructor
    verifies that every ``(q_i, Q_ii)`` pair admits a Beta distribution.
    """

    gamma: float
    q: np.ndarray
    Q: np.ndarray
    H: float
    q_c: Optional[np.ndarray] = None
    Q_c: Optional[np.ndarray] = None
    beta_sampling: bool = field(default=False, compare=False)

    def __post_init__(self):
        g = float(self.gamma)
        if not 0.0 <= g <= 1.0:
            raise DomainError(f"gamma must lie in [0, 1], got {g}")
        object.__setattr__(self, "gamma", g)
        q = _frozen(self.q).reshape(-1)
        Q = _frozen(as_diagonal(self.Q, "Q"))
        if q.size != Q.size:
            raise DomainError(f"q has {q.size} entries but Q has {Q.size}")
        if np.any(Q < 0):
            raise DomainError("Q must have non-negative diagonal entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Q", Q)
        H = float(self.H)
        if not H >= 0:
            raise DomainError(f"H must be non-negative, got {H}")
        object.__setattr__(self, "H", H)
        if (self.q_c is None) != (self.Q_c is None):
            raise DomainError("q_c and Q_c must be given together")
        if self.q_c is not None:
            q_c = _frozen(self.q_c).reshape(-1)
            Q_c = _frozen(as_diagonal(self.Q_c, "Q_c"))
            if q_c.size != Q_c.size:
                raise DomainError("q_c and Q_c sizes differ")
            if np.any(Q_c < 0):
                raise DomainError("Q_c must have non-negative diagonal entries")
            object.__setattr__(self, "q_c", q_c)
            object.__setattr__(self, "Q_c", Q_c)
        if self.beta_sampling:
            beta_params_from_moments(self.q, self.Q)

    @property
    def n_scrap(self) -> int:
        return self.q.size

    @property
    def augmented(self) -> bool:
        return self.q_c is not None

    @property
    def P_inf(self) -> np.ndarray:
        return stationary_covariance(self.gamma, self.Q)

    @property
    def P_c_inf(self) -> Optional[np.ndarray]:
        return None if self.Q_c is None else stationary_covariance(self.gamma, self.Q_c)

    @property
    def q_aug(self) -> np.ndarray:
        """Process-noise mean of the augmented state ``[q, q_c]``."""
        return self.q if self.q_c is None else np.concatenate([self.q, self.q_c])

    @property
    def Q_aug(self) -> np.ndarray:
        """Diagonal of ``blockdiag(Q, Q_c)``."""
        return self.Q if self.Q_c is None else np.concatenate([self.Q, self.Q_c])

    def initial_belief(self) -> GaussianBelief:
        """Default start ``a_1 = [q, q_c]``, ``P_1 = blockdiag(Q, Q_c)``."""
        return GaussianBelief(self.q_aug, np.diag(self.Q_aug))

    def replace(self, **changes) -> "NoiseSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {"gamma": self.gamma, "q": self.q.tolist(), "Q": self.Q.tolist(), "H": self.H}
        if self.q_c is not None:
            d["q_c"] = self.q_c.tolist()
            d["Q_c"] = self.Q_c.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict, beta_sampling: bool = False) -> "NoiseSpec":
        return cls(
            gamma=d["gamma"], q=d["q"], Q=d["Q"], H=d["H"],
            q_c=d.get("q_c"), Q_c=d.get("Q_c"), beta_sampling=beta_sampling,
        )


@dataclass(frozen=True)
class PartitionModel:
    """Slag/steel partition coefficient, affine in the slag FeOn fraction."""

    c1: float
    c2: float

    def ell(self, f_feon):
        return self.c1 + self.c2 * np.asarray(f_feon, dtype=float)

    def check_nonnegative(self) -> None:
        # affine in f, so the endpoints of [0, 1] suffice
        if min(self.c1, self.c1 + self.c2) < 0:
            raise DomainError(f"partition coefficient negative on [0, 1] for c=({self.c1}, {self.c2})")


# --------------------------------------------------------------------------
# Closed-form relations
# --------------------------------------------------------------------------


def gamma_from_half_life(h: float) -> float:
    """``ln 2 / h``; ``h = inf`` gives 0 (a frozen state)."""
    h = float(h)
    if not h > 0:
        raise DomainError(f"half-life must be positive, got {h}")
    return math.log(2.0) / h


def _check_gamma_open(gamma: float) -> float:
    gamma = float(gamma)
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    return gamma


def stationary_covariance(gamma: float, Q):
    """Long-run covariance ``gamma / (2 - gamma) * Q``.

    ``Q`` may be a diagonal vector or a diagonal matrix; the result has the
    same shape.
    """
    gamma = _check_gamma_open(gamma)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 2:
        as_diagonal(Q)
    return (gamma / (2.0 - gamma)) * Q


def process_noise_from_stationary(gamma: float, P_inf):
    """Inverse of :func:`stationary_covariance`: ``(2 - gamma) / gamma * P_inf``."""
    gamma = _check_gamma_open(gamma)
    P_inf = np.asarray(P_inf, dtype=float)
    if P_inf.ndim == 2:
        as_diagonal(P_inf, "P_inf")
    return ((2.0 - gamma) / gamma) * P_inf


def beta_params_from_moments(q, Q):
    """Beta shape parameters ``(u, v)`` with mean ``q`` and variance ``Q``.

    Works elementwise on arrays.  Raises :class:`MomentMatchingError` naming
    the first component for which ``u`` or ``v`` is not strictly positive.
    """
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    Q_arr = np.atleast_1d(as_diagonal(Q))
    if q_arr.shape != Q_arr.shape:
        raise DomainError("q and Q must have the same length")
    with np.errstate(divide="ignore", invalid="ignore"):
        u = q_arr ** 2 * (1.0 - q_arr) / Q_arr - q_arr
        v = u / q_arr - u
    bad = ~((q_arr > 0) & (q_arr < 1) & (Q_arr > 0) & (u > 0) & (v > 0))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise MomentMatchingError(
            f"Beta moment matching infeasible at index {i}: q={q_arr[i]!r}, Q={Q_arr[i]!r} "
            f"(need 0 < q < 1 and 0 < Q < q(1-q))",
            index=i,
        )
    if np.ndim(q) == 0 and np.ndim(Q) == 0:
        return float(u[0]), float(v[0])
    return u, v


def propagate_moments(a1, P1, gamma: float, q, Q, t: int):
    """Mean and covariance of ``alpha[t+1]`` after ``t`` state updates.

    ``P1`` may be a full matrix or a diagonal vector; the returned covariance
    has the same form.  ``Q`` is diagonal.
    """
    t = int(t)
    if t < 0:
        raise DomainError("t must be non-negative")
    a1 = np.asarray(a1, dtype=float)
    P1 = np.asarray(P1, dtype=float)
    q = np.asarray(q, dtype=float)
    Qd = as_diagonal(Q)
    if not (a1.shape == q.shape == Qd.shape and P1.shape[0] == a1.size):
        raise DomainError("dimension mismatch in propagate_moments")
    if t == 0:
        return a1.copy(), P1.copy()
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise DomainError(f"gamma must lie in [0, 1], got {gamma}")
    decay = (1.0 - gamma) ** t
    a = decay * a1 + (1.0 - decay) * q
    if gamma == 0.0:
        return a, P1.copy()
    # (1 - (1-g)^{2t}) / (1 - (1-g)^2) * g^2  ==  -expm1(2t log1p(-g)) * g / (2 - g)
    growth = 1.0 if gamma == 1.0 else -math.expm1(2 * t * math.log1p(-gamma))
    noise = growth * gamma / (2.0 - gamma) * Qd
    P = decay ** 2 * P1 + (np.diag(noise) if P1.ndim == 2 else noise)
    return a, P


def estimate_obs_variance_linear(m_steel: float, sd_f_steel: float, m_hm: float, sd_f_hm: float) -> float:
    """Observation-noise variance of ``m_steel f_steel - m_hm f_hm`` (kg^2)."""
    for name, x in (("m_steel", m_steel), ("sd_f_steel", sd_f_steel), ("m_hm", m_hm), ("sd_f_hm", sd_f_hm)):
        if x < 0:
            raise DomainError(f"{name} must be non-negative")
    return float(m_steel) ** 2 * float(sd_f_steel) ** 2 + float(m_hm) ** 2 * float(sd_f_hm) ** 2
