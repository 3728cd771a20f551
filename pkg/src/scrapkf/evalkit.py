"""Error statistics, misspecification sweeps and report export."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .exceptions import DomainError
from .filters import DEFAULT_K, FilterTrace, run_filter
from .model import Heats, NoiseSpec, process_noise_from_stationary, stationary_covariance

PPM = 1e6
SWEEP_AXES = ("q", "H", "gamma_Q", "gamma_Pinf", "q_c", "Q_c", "k")


def fmt(x) -> str:
    """17 significant digits; NaN becomes an empty field."""
    x = float(x)
    return "" if np.isnan(x) else format(x, ".17g")


@dataclass(frozen=True)
class ErrorSummary:
    """Mean and sample standard deviation (n - 1 divisor) of prediction errors in ppm.

    The numerator/denominator fields are filled for slag-transferring
    elements when the ground truth is known (grams and tonnes).
    """

    mean_error: float
    std_error: float
    n: int
    burn_in: int = 0
    numerator_mean_g: Optional[float] = None
    numerator_std_g: Optional[float] = None
    denominator_mean_t: Optional[float] = None
    denominator_std_t: Optional[float] = None

    def as_row(self) -> Dict[str, object]:
        return {
            "mean_error_ppm": self.mean_error,
            "std_error_ppm": self.std_error,
            "n": self.n,
            "burn_in": self.burn_in,
            "numerator_mean_g": self.numerator_mean_g,
            "numerator_std_g": self.numerator_std_g,
            "denominator_mean_t": self.denominator_mean_t,
            "denominator_std_t": self.denominator_std_t,
        }


def _mean_sd(e) -> tuple:
    e = np.asarray(e, dtype=float).reshape(-1)
    if e.size < 2:
        raise DomainError(f"need at least 2 errors, got {e.size}")
    return float(e.mean()), float(e.std(ddof=1)), e.size


def summarize(e, burn_in: int = 0) -> ErrorSummary:
    mean, sd, n = _mean_sd(e)
    return ErrorSummary(mean, sd, n, burn_in)


def _aligned(trace, heats: Heats):
    if len(trace.heat_index) != len(heats) or not np.array_equal(trace.heat_index, heats.heat_index):
        raise DomainError("trace and heats are not aligned (heat_index differs)")


def _check_burn_in(burn_in: int, T: int):
    if not 0 <= burn_in < T:
        raise DomainError(f"burn_in must lie in [0, {T}), got {burn_in}")


def prediction_errors(trace, heats: Heats, burn_in: int = 5000) -> np.ndarray:
    """Errors ``predicted - measured`` steel fraction in ppm after ``burn_in`` heats.

    ``trace`` is anything with ``heat_index`` and ``predicted_f_steel``
    (a filter trace or a windowed NNLS result).  Heats without a measurement
    or without a prediction are skipped.
    """
    _aligned(trace, heats)
    _check_burn_in(burn_in, len(heats))
    e = (np.asarray(trace.predicted_f_steel, float) - heats.f_steel)[burn_in:]
    return e[~np.isnan(e)] * PPM


def true_prediction_parts(heats: Heats, truth_alpha, truth_c=None):
    """Numerator (kg) and denominator (kg) of the steel fraction under the true state."""
    num = np.einsum("ij,ij->i", heats.scrap_mass, np.asarray(truth_alpha, float)) + heats.m_hm * heats.f_hm
    den = heats.m_steel.copy()
    if truth_c is not None:
        truth_c = np.asarray(truth_c, float)
        den = den + heats.m_slag * (truth_c[:, 0] + truth_c[:, 1] * heats.f_feon_slag)
    return num, den


def evaluate(trace, heats: Heats, burn_in: int = 5000, truth_alpha=None, truth_c=None) -> ErrorSummary:
    """Summary of steel-fraction errors, plus numerator/denominator errors when ``truth_c`` is given."""
    s = summarize(prediction_errors(trace, heats, burn_in), burn_in)
    if truth_c is None or truth_alpha is None or not hasattr(trace, "predicted_numerator"):
        return s
    num, den = true_prediction_parts(heats, truth_alpha, truth_c)
    keep = slice(burn_in, None)
    nm, ns, _ = _mean_sd(((trace.predicted_numerator - num) * 1e3)[keep])
    dm, ds, _ = _mean_sd(((trace.predicted_denominator - den) / 1e3)[keep])
    return ErrorSummary(s.mean_error, s.std_error, s.n, burn_in, nm, ns, dm, ds)


def estimate_volatility(trace: FilterTrace, component: int, burn_in: int = 5000) -> tuple:
    """``(sd over time of the posterior mean, time-averaged posterior sd)`` of one component, in ppm."""
    _check_burn_in(burn_in, len(trace))
    series = trace.post_mean[burn_in:, component]
    if series.size < 2:
        raise DomainError("need at least 2 heats after burn-in")
    return float(series.std(ddof=1) * PPM), float(np.sqrt(trace.post_var[burn_in:, component]).mean() * PPM)


# --------------------------------------------------------------------------
# Misspecification sweeps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    axis: str
    multiplier: float
    summary: ErrorSummary
    volatility: float
    mean_posterior_sd: float

    def as_row(self) -> Dict[str, object]:
        row = {"axis": self.axis, "multiplier": self.multiplier}
        row.update(self.summary.as_row())
        row["volatility_ppm"] = self.volatility
        row["mean_posterior_sd_ppm"] = self.mean_posterior_sd
        return row


def scaled_spec(base: NoiseSpec, axis: str, multiplier: float) -> NoiseSpec:
    """``base`` with one hyperparameter scaled; the others stay fixed.

    ``gamma_Q`` keeps ``Q``; ``gamma_Pinf`` keeps the stationary covariance
    and rederives ``Q`` (and ``Q_c``) for the new ``gamma``.  A multiplier of
    exactly 1 returns ``base`` unchanged.
    """
    if axis not in SWEEP_AXES or axis == "k":
        raise DomainError(f"axis must be one of {SWEEP_AXES[:-1]}, got {axis!r}")
    m = float(multiplier)
    if not m > 0:
        raise DomainError("multipliers must be positive")
    if m == 1.0:
        return base
    if axis == "q":
        return base.replace(q=base.q * m)
    if axis == "H":
        return base.replace(H=base.H * m)
    if axis in ("q_c", "Q_c"):
        if not base.augmented:
            raise DomainError(f"axis {axis} needs partition parameters")
        return base.replace(**{axis: getattr(base, axis) * m})
    gamma = base.gamma * m
    if not 0 < gamma < 1:
        raise DomainError(f"scaled gamma {gamma} leaves (0, 1)")
    if axis == "gamma_Q":
        return base.replace(gamma=gamma)
    changes = {"gamma": gamma, "Q": process_noise_from_stationary(gamma, stationary_covariance(base.gamma, base.Q))}
    if base.augmented:
        changes["Q_c"] = process_noise_from_stationary(gamma, stationary_covariance(base.gamma, base.Q_c))
    return base.replace(**changes)


def _sweep_one(args):
    dataset, spec, k, burn_in, component, axis, mult = args
    trace = run_filter(dataset.heats, spec, dataset.element, k=k)
    summary = evaluate(trace, dataset.heats, burn_in, dataset.truth_alpha, dataset.truth_c)
    vol, psd = estimate_volatility(trace, component, burn_in)
    return SweepRow(axis, float(mult), summary, vol, psd)


def misspecification_sweep(dataset, base_spec: NoiseSpec, axis: str, multipliers: Sequence[float],
                           burn_in: int = 5000, component: int = 35, k=DEFAULT_K,
                           workers: int = 1) -> List[SweepRow]:
    """Refit ``dataset`` once per multiplier with one hyperparameter changed.

    For ``axis="k"`` the multipliers are the sigma-point ``k`` values
    themselves.  ``component`` (0-based) is the scrap type whose estimate
    volatility is reported.  Rows come back in multiplier order whatever
    ``workers`` is.
    """
    multipliers = list(multipliers)
    if not multipliers:
        raise DomainError("multipliers must be non-empty")
    if axis not in SWEEP_AXES:
        raise DomainError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not 0 <= component < base_spec.n_scrap:
        raise DomainError(f"component {component} out of range")
    jobs = []
    for m in multipliers:
        if axis == "k":
            jobs.append((dataset, base_spec, m, burn_in, component, axis, m))
        else:
            jobs.append((dataset, scaled_spec(base_spec, axis, m), k, burn_in, component, axis, m))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_one, jobs))
    return [_sweep_one(j) for j in jobs]


# --------------------------------------------------------------------------
# Coverage and export
# --------------------------------------------------------------------------


def credible_bands(trace: FilterTrace, width: float = 2.0):
    """Posterior ``mean -/+ width * sd`` for every heat and state component."""
    sd = np.sqrt(trace.post_var)
    return trace.post_mean - width * sd, trace.post_mean + width * sd


def band_coverage(lo, hi, truth, burn_in: int = 0) -> float:
    """Share of ``(heat, component)`` cells with ``lo <= truth <= hi`` after ``burn_in``."""
    lo, hi, truth = (np.asarray(a, float)[burn_in:] for a in (lo, hi, truth))
    if truth.size == 0:
        raise DomainError("nothing to cover")
    return float(np.mean((lo <= truth) & (truth <= hi)))


def trace_coverage(trace: FilterTrace, truth_alpha, burn_in: int = 0, components=None) -> float:
    """Coverage of the true scrap fractions by the 2-sd posterior bands.

    Works on the same ppm values that :func:`export_report` writes, so the
    figure recomputed from the files is identical.
    """
    comps = list(range(trace.n_scrap)) if components is None else list(components)
    lo, hi = credible_bands(trace)
    return band_coverage(lo[:, comps] * PPM, hi[:, comps] * PPM, np.asarray(truth_alpha)[:, comps] * PPM, burn_in)


def _open_for_write(path):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write report file: {exc.strerror}", str(path)) from exc


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def write_rows(path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fieldnames)
        for row in rows:
            w.writerow([_cell(row.get(f)) for f in fieldnames])


SUMMARY_FIELDS = ("label",) + tuple(ErrorSummary(0.0, 0.0, 0).as_row())
SWEEP_FIELDS = ("axis", "multiplier") + tuple(ErrorSummary(0.0, 0.0, 0).as_row()) + (
    "volatility_ppm", "mean_posterior_sd_ppm")
PLOT_FIELDS = ("series", "t", "value")


def write_summary(path, summaries: Dict[str, ErrorSummary]) -> None:
    write_rows(path, SUMMARY_FIELDS, ({"label": k, **s.as_row()} for k, s in summaries.items()))


def write_sweep(path, rows: Sequence[SweepRow]) -> None:
    write_rows(path, SWEEP_FIELDS, (r.as_row() for r in rows))


def plot_rows(trace: FilterTrace, heats: Heats, labels: Sequence[str], truth_alpha=None, truth_c=None,
              components: Optional[Sequence[int]] = None):
    """Long-format plot data ``(series, t, value)``; ``t`` is the heat index.

    Per scrap type: posterior mean in ppm (``alpha[<id>]``), the 2-sd band
    (``alpha_lo``/``alpha_hi``), truth when known and a 0/1 usage indicator.
    Augmented runs add ``c1``, ``c2`` (with bands) and the implied partition
    coefficient ``ell``.
    """
    n = trace.n_scrap
    comps = range(n) if components is None else components
    lo, hi = credible_bands(trace)
    t = trace.heat_index
    for i in comps:
        lab = labels[i]
        yield from _series(f"alpha[{lab}]", t, trace.post_mean[:, i] * PPM)
        yield from _series(f"alpha_lo[{lab}]", t, lo[:, i] * PPM)
        yield from _series(f"alpha_hi[{lab}]", t, hi[:, i] * PPM)
        if truth_alpha is not None:
            yield from _series(f"truth[{lab}]", t, np.asarray(truth_alpha)[:, i] * PPM)
        yield from _series(f"usage[{lab}]", t, (heats.scrap_mass[:, i] > 0).astype(float))
    if trace.post_mean.shape[1] > n:
        for j, name in enumerate(("c1", "c2")):
            col = n + j
            yield from _series(name, t, trace.post_mean[:, col])
            yield from _series(f"{name}_lo", t, lo[:, col])
            yield from _series(f"{name}_hi", t, hi[:, col])
            if truth_c is not None:
                yield from _series(f"{name}_truth", t, np.asarray(truth_c)[:, j])
        ell = trace.post_mean[:, n] + trace.post_mean[:, n + 1] * heats.f_feon_slag
        yield from _series("ell", t, ell)
        if truth_c is not None:
            truth_c = np.asarray(truth_c)
            yield from _series("ell_truth", t, truth_c[:, 0] + truth_c[:, 1] * heats.f_feon_slag)


def _series(name, t, values):
    for ti, v in zip(t, values):
        yield {"series": name, "t": int(ti), "value": float(v)}


def export_report(out_dir, summaries: Dict[str, ErrorSummary], traces: Dict[str, FilterTrace] = None,
                  heats: Optional[Heats] = None, labels: Optional[Sequence[str]] = None,
                  truth_alpha=None, truth_c=None, components=None, sweep: Optional[Sequence[SweepRow]] = None):
    """Write ``summary.csv``, ``sweep.csv`` (if given) and ``plot_<name>.csv`` per trace.

    Returns the list of written paths.  Values carry 17 significant digits
    so re-parsing recovers them exactly.
    """
    paths = []
    p = os.path.join(out_dir, "summary.csv")
    write_summary(p, summaries)
    paths.append(p)
    if sweep is not None:
        p = os.path.join(out_dir, "sweep.csv")
        write_sweep(p, sweep)
        paths.append(p)
    for name, trace in (traces or {}).items():
        if heats is None:
            raise DomainError("heats are needed to export plot series")
        labs = labels or [f"{i + 1:02d}" for i in range(trace.n_scrap)]
        p = os.path.join(out_dir, f"plot_{name}.csv")
        write_rows(p, PLOT_FIELDS, plot_rows(trace, heats, labs, truth_alpha, truth_c, components))
        paths.append(p)
    return paths


def read_plot_series(path) -> Dict[str, tuple]:
    """Parse a plot CSV back into ``{series: (t, values)}``."""
    acc: Dict[str, tuple] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header is not None and tuple(header) != PLOT_FIELDS:
            raise DomainError(f"{path}: unexpected header {header}")
        for row in r:
            ts, vs = acc.setdefault(row[0], ([], []))
            ts.append(int(row[1]))
            vs.append(float(row[2]) if row[2] else np.nan)
    return {k: (np.array(t), np.array(v)) for k, (t, v) in acc.items()}


def coverage_from_plot(series: Dict[str, tuple], labels: Sequence[str], burn_in: int = 0) -> float:
    """Band coverage recomputed from parsed plot series (ppm values)."""
    lo = np.column_stack([series[f"alpha_lo[{l}]"][1] for l in labels])
    hi = np.column_stack([series[f"alpha_hi[{l}]"][1] for l in labels])
    tr = np.column_stack([series[f"truth[{l}]"][1] for l in labels])
    return band_coverage(lo, hi, tr, burn_in)
