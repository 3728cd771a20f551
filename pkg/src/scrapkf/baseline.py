"""Windowed non-negative least squares baseline and least-squares initialisation of ``q``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DomainError, SolverError
from .model import ElementSpec, Heats
from .validation import check_heats


@dataclass(frozen=True)
class WindowConfig:
    """Sliding-window settings.

    Estimates start once ``window`` heats have passed; ``min_rows`` is the
    fewest measured heats a window must hold to be solved (missing
    ``f_steel`` values thin a window out).  ``fixed_ell`` is the constant
    partition coefficient that linearises slag-transferring elements.
    """

    window: int = 2000
    min_rows: int = 1
    fixed_ell: float = 10.0
    stride: int = 1
    ridge: float = 1e-10

    def __post_init__(self):
        if self.window < 1:
            raise DomainError("window must be at least 1")
        if not 1 <= self.min_rows <= self.window:
            raise DomainError("min_rows must lie in [1, window]")
        if self.stride < 1:
            raise DomainError("stride must be at least 1")


# --------------------------------------------------------------------------
# Active-set solver
# --------------------------------------------------------------------------


def _active_set(grad, solve, n, tol, max_iter, passive=None):
    """Lawson-Hanson iterations.

    ``grad(x)`` returns the negative gradient ``A^T (b - A x)``; ``solve(P)``
    the unconstrained least-squares solution restricted to the boolean mask
    ``P`` (zeros elsewhere).  ``passive`` optionally warm-starts the support.
    """
    x = np.zeros(n)
    P = np.zeros(n, bool)
    if passive is not None and np.any(passive):
        P = np.array(passive, bool)
        while P.any():
            z = solve(P)
            bad = P & (z <= 0)
            if not bad.any():
                x = z
                break
            P &= ~bad
    w = grad(x)
    blocked = np.zeros(n, bool)
    it = 0
    while True:
        candidates = ~P & ~blocked
        if not candidates.any() or np.max(w[candidates]) <= tol:
            break
        j = int(np.flatnonzero(candidates)[np.argmax(w[candidates])])
        P[j] = True
        x_before = x.copy()
        while True:
            it += 1
            if it > max_iter:
                raise SolverError(
                    "NNLS did not converge",
                    {"iterations": it, "passive": np.flatnonzero(P).tolist(), "max_dual": float(np.max(w))},
                )
            z = solve(P)
            if np.all(z[P] > 0):
                x = z
                break
            neg = P & (z <= 0)
            step = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + step * (z - x)
            drop = P & (x <= 0)
            drop |= neg & (np.abs(x) <= 1e-14 * max(1.0, np.max(np.abs(x))))
            P &= ~drop
            x[~P] = 0.0
        if np.array_equal(x, x_before):
            # degenerate pivot: j could not enter; keep it out until x moves
            blocked[j] = True
            P[j] = False
        else:
            blocked[:] = False
        w = grad(x)
    return x, it


def nnls_solve(X, y, max_iter: Optional[int] = None, tol: Optional[float] = None) -> np.ndarray:
    """Minimise ``||X beta - y||_2`` subject to ``beta >= 0``.

    Lawson-Hanson active-set method; raises :class:`SolverError` after
    ``max_iter`` inner iterations (default ``30 * n_columns``).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[0] != y.size:
        raise DomainError("X must be a (rows >= 1, n) matrix matching y")
    n = X.shape[1]
    Xty = X.T @ y
    if tol is None:
        tol = 1e-12 * max(np.max(np.abs(Xty), initial=0.0), np.finfo(float).tiny)

    def grad(x):
        return X.T @ (y - X @ x)

    def solve(P):
        z = np.zeros(n)
        z[P] = np.linalg.lstsq(X[:, P], y, rcond=None)[0]
        return z

    x, _ = _active_set(grad, solve, n, tol, max_iter or 30 * max(n, 1))
    return x


def nnls_gram(G, b, passive=None, max_iter: Optional[int] = None, tol: Optional[float] = None) -> np.ndarray:
    """NNLS in normal-equation form: minimise ``x^T G x / 2 - b^T x``, ``x >= 0``.

    ``G`` must be symmetric positive semidefinite (add a ridge when it may be
    singular).  ``passive`` warm-starts the support.
    """
    G = np.asarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    n = b.size
    if tol is None:
        tol = 1e-12 * max(np.max(np.abs(b), initial=0.0), np.finfo(float).tiny)

    def grad(x):
        return b - G @ x

    def solve(P):
        z = np.zeros(n)
        idx = np.flatnonzero(P)
        sub = G[np.ix_(idx, idx)]
        try:
            z[idx] = np.linalg.solve(sub, b[idx])
        except np.linalg.LinAlgError:
            z[idx] = np.linalg.lstsq(sub, b[idx], rcond=None)[0]
        return z

    x, _ = _active_set(grad, solve, n, tol, max_iter or 30 * max(n, 1), passive)
    return x


def kkt_residual(X, y, beta) -> float:
    """Largest violation of the NNLS optimality conditions.

    With ``g = X^T (y - X beta)``: ``|g_i|`` where ``beta_i > 0`` and
    ``max(g_i, 0)`` where ``beta_i == 0``, plus any negativity of ``beta``.
    """
    X = np.asarray(X, float)
    beta = np.asarray(beta, float)
    g = X.T @ (np.asarray(y, float) - X @ beta)
    pos = beta > 0
    viol = np.where(pos, np.abs(g), np.maximum(g, 0.0))
    return float(max(np.max(viol, initial=0.0), np.max(-beta, initial=0.0)))


# --------------------------------------------------------------------------
# Heat-based regressions
# --------------------------------------------------------------------------


def regression_target(heats: Heats, element: ElementSpec, fixed_ell: float = 10.0) -> np.ndarray:
    """Scrap-borne element mass implied by each heat (kg); NaN where ``f_steel`` is missing.

    Slag-transferring elements use a constant partition coefficient
    ``fixed_ell``: ``f_steel (m_steel + m_slag ell) - m_hm f_hm``.
    """
    if element.transfers_to_slag:
        out = heats.f_steel * (heats.m_steel + heats.m_slag * fixed_ell)
    else:
        out = heats.m_steel * heats.f_steel
    return out - heats.m_hm * heats.f_hm


def predict_from_alpha(alpha, heats: Heats, element: ElementSpec, fixed_ell: float = 10.0) -> np.ndarray:
    """Steel fraction predicted from per-heat scrap fractions ``alpha`` (rows align with heats)."""
    num = np.einsum("ij,ij->i", heats.scrap_mass, np.asarray(alpha, float)) + heats.m_hm * heats.f_hm
    den = heats.m_steel + (heats.m_slag * fixed_ell if element.transfers_to_slag else 0.0)
    return num / den


@dataclass(frozen=True, eq=False)
class WindowedNNLSResult:
    """Per-heat windowed estimates; rows without an estimate are NaN."""

    heat_index: np.ndarray
    alpha_hat: np.ndarray
    predicted_f_steel: np.ndarray
    unidentifiable: np.ndarray
    n_rows: np.ndarray

    def __len__(self):
        return self.heat_index.size

    @property
    def has_estimate(self) -> np.ndarray:
        return ~np.isnan(self.predicted_f_steel)


def windowed_nnls(heats, element: ElementSpec, cfg: WindowConfig = WindowConfig(),
                  refresh: Optional[int] = None) -> WindowedNNLSResult:
    """Sliding-window NNLS estimates using only heats before each predicted heat.

    At position ``t >= window`` the fit uses the observed heats among
    ``t - window .. t - 1``.  A tiny ridge ``cfg.ridge * mean(diag G)`` keeps
    the normal equations solvable; columns with no usage in the window stay
    at zero and are flagged unidentifiable.  The Gram matrix is updated
    incrementally and rebuilt every ``refresh`` heats (default ``window``).
    """
    heats = check_heats(heats)
    T, N = len(heats), heats.n_scrap
    W = cfg.window
    target = regression_target(heats, element, cfg.fixed_ell)
    usable = ~np.isnan(target)
    Xr = np.where(usable[:, None], heats.scrap_mass, 0.0)
    yr = np.where(usable, target, 0.0)
    used = (Xr != 0).astype(np.int64)
    refresh = refresh or W

    alpha_hat = np.full((T, N), np.nan)
    unid = np.zeros((T, N), bool)
    n_rows = np.zeros(T, dtype=np.int64)
    G = b = counts = None
    rows = 0
    lo = 0
    current = None
    current_unid = np.zeros(N, bool)
    passive = None
    last_rebuild = None
    for t in range(W, T):
        new_lo = t - W
        if G is None or t - last_rebuild >= refresh:
            lo = new_lo
            G = Xr[lo:t].T @ Xr[lo:t]
            b = Xr[lo:t].T @ yr[lo:t]
            counts = used[lo:t].sum(axis=0)
            rows = int(usable[lo:t].sum())
            last_rebuild = t
        else:
            # slide by one: add row t-1, drop row lo
            add, rem = t - 1, lo
            G += np.outer(Xr[add], Xr[add]) - np.outer(Xr[rem], Xr[rem])
            b += Xr[add] * yr[add] - Xr[rem] * yr[rem]
            counts += used[add] - used[rem]
            rows += int(usable[add]) - int(usable[rem])
            lo = new_lo
        n_rows[t] = rows
        if rows < cfg.min_rows:
            current = None
            continue
        if current is None or (t - W) % cfg.stride == 0:
            diag = np.diag(G)
            scale = diag.mean() if diag.size else 0.0
            current_unid = (counts == 0) | (diag <= 1e-12 * scale)
            live = ~current_unid
            est = np.zeros(N)
            if live.any():
                idx = np.flatnonzero(live)
                Gl = G[np.ix_(idx, idx)] + cfg.ridge * scale * np.eye(idx.size)
                est[idx] = nnls_gram(Gl, b[idx], passive=None if passive is None else passive[idx])
            passive = est > 0
            current = est
        alpha_hat[t] = current
        unid[t] = current_unid

    # rows without an estimate carry NaN alpha and so a NaN prediction
    pred = predict_from_alpha(alpha_hat, heats, element, cfg.fixed_ell)
    return WindowedNNLSResult(heats.heat_index.copy(), alpha_hat, pred, unid, n_rows)


def ols_init(heats, element: ElementSpec, n_heats: Optional[int] = None, method: str = "ols",
             floor: float = 1e-7, fixed_ell: float = 10.0) -> np.ndarray:
    """Estimate ``q`` from the first ``n_heats`` heats.

    ``method="ols"`` solves ordinary least squares (minimum-norm when the
    design is rank deficient, with a warning), clamps negatives to zero;
    ``method="nnls"`` solves the non-negative problem directly.  Every
    component is finally floored at ``floor`` so ``q`` stays a valid Beta
    mean.
    """
    heats = check_heats(heats)
    if n_heats is not None:
        heats = heats[:n_heats]
    target = regression_target(heats, element, fixed_ell)
    ok = ~np.isnan(target)
    X, y = heats.scrap_mass[ok], target[ok]
    if X.shape[0] == 0:
        raise DomainError("no observed heats to initialise from")
    if method == "nnls":
        beta = nnls_solve(X, y)
    elif method == "ols":
        beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
        if rank < X.shape[1]:
            warnings.warn(f"OLS design has rank {rank} < {X.shape[1]}; using the minimum-norm solution",
                          RuntimeWarning, stacklevel=2)
        beta = np.maximum(beta, 0.0)
    else:
        raise DomainError(f"unknown method {method!r}")
    return np.maximum(beta, floor)
