"""Input validation helpers shared by the estimators, the filters and the I/O layer."""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from .exceptions import DomainError
from .model import GaussianBelief, HeatRecord, Heats

MASS_COLUMNS = ("m_hm", "m_steel", "m_slag")
FRACTION_COLUMNS = ("f_hm", "f_steel", "f_feon_slag")


def heat_row_errors(heats: Heats, require_slag: bool = False) -> List[Tuple[int, str]]:
    """Return ``(row, message)`` pairs for every violated heat invariant.

    ``row`` is the 0-based position in ``heats``.  Missing (NaN) ``f_steel``
    and ``f_feon_slag`` are allowed unless ``require_slag`` asks for the
    slag columns.
    """
    errors = []
    sm = heats.scrap_mass
    bad = np.flatnonzero(~np.all(np.isfinite(sm) & (sm >= 0), axis=1))
    errors.extend((int(i), "scrap masses must be finite and non-negative") for i in bad)
    for name in MASS_COLUMNS:
        col = getattr(heats, name)
        for i in np.flatnonzero(~(np.isfinite(col) & (col >= 0))):
            errors.append((int(i), f"{name} must be finite and non-negative, got {col[i]!r}"))
    for name in FRACTION_COLUMNS:
        col = getattr(heats, name)
        may_be_missing = name == "f_steel" or (name == "f_feon_slag" and not require_slag)
        present = ~np.isnan(col) if may_be_missing else np.ones(col.shape, bool)
        for i in np.flatnonzero(present & ~((col >= 0) & (col <= 1))):
            errors.append((int(i), f"{name} must lie in [0, 1], got {col[i]!r}"))
    for i in np.flatnonzero(heats.observed & ~(heats.m_steel > 0)):
        errors.append((int(i), "m_steel must be positive when f_steel is present"))
    hi = heats.heat_index
    for i in np.flatnonzero(np.diff(hi) <= 0):
        errors.append((int(i) + 1, f"heat_index must increase strictly ({hi[i]} then {hi[i + 1]})"))
    errors.sort(key=lambda e: e[0])
    return errors


def _heats_from_frame(df) -> Heats:
    scrap_cols = [c for c in df.columns if str(c).startswith("m_scrap_")]
    if not scrap_cols:
        raise DomainError("frame has no m_scrap_<id> columns")
    n = len(df)

    def col(name, default=np.nan):
        return df[name].to_numpy(dtype=float) if name in df.columns else np.full(n, default)

    hi = df["heat_index"].to_numpy() if "heat_index" in df.columns else np.arange(1, n + 1)
    return Heats(
        heat_index=hi,
        scrap_mass=df[scrap_cols].to_numpy(dtype=float),
        m_hm=col("m_hm", 0.0),
        f_hm=col("f_hm", 0.0),
        m_steel=col("m_steel"),
        f_steel=col("f_steel"),
        m_slag=col("m_slag", 0.0),
        f_feon_slag=col("f_feon_slag"),
    )


def check_heats(
    X,
    y=None,
    n_scrap: Optional[int] = None,
    require_f_steel: bool = False,
    require_slag: bool = False,
) -> Heats:
    """Coerce ``X`` into validated :class:`Heats`.

    ``X`` may be ``Heats``, an iterable of :class:`HeatRecord`, or a
    DataFrame laid out like the heats CSV (fractions, not ppm).  When ``y``
    is given it replaces the ``f_steel`` column.
    """
    if isinstance(X, Heats):
        heats = X
    elif hasattr(X, "columns") and hasattr(X, "to_numpy"):
        heats = _heats_from_frame(X)
    else:
        records = list(X)
        if records and not all(isinstance(r, HeatRecord) for r in records):
            raise DomainError("expected Heats, HeatRecord items or a DataFrame")
        heats = Heats.from_records(records, n_scrap=n_scrap)
    if y is not None:
        y = np.asarray(y, dtype=float).reshape(-1)
        if y.size != len(heats):
            raise DomainError(f"y has {y.size} entries but X has {len(heats)} heats")
        heats = heats.replace(f_steel=y)
    if n_scrap is not None and len(heats) and heats.n_scrap != n_scrap:
        raise DomainError(f"heats carry {heats.n_scrap} scrap types, expected {n_scrap}")
    errors = heat_row_errors(heats, require_slag=require_slag)
    if errors:
        row, msg = errors[0]
        raise DomainError(f"invalid heat at row {row}: {msg}" + (f" (+{len(errors) - 1} more)" if len(errors) > 1 else ""))
    if require_f_steel and not np.all(heats.observed):
        raise DomainError("every heat needs f_steel here")
    return heats


def check_belief(belief: GaussianBelief, dim: Optional[int] = None) -> GaussianBelief:
    if not isinstance(belief, GaussianBelief):
        raise DomainError("expected a GaussianBelief")
    if dim is not None and belief.dim != dim:
        raise DomainError(f"belief has dimension {belief.dim}, expected {dim}")
    if not belief.is_psd():
        raise DomainError("belief covariance is not positive semidefinite")
    return belief


def check_same_length(*arrays):
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise DomainError(f"length mismatch: {sorted(lengths)}")
