"""File formats and run configuration.

Fractions are stored in ppm in CSV files and converted at this boundary
through exact decimal arithmetic, so ``save_heats`` followed by
``load_heats`` reproduces every float bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .exceptions import DomainError, HeatsParseError
from .model import Heats, NoiseSpec, ScrapCatalog
from .validation import heat_row_errors

FIXED_BEFORE = ("heat_index",)
FIXED_AFTER = ("m_hm", "f_hm", "m_steel", "f_steel", "m_slag", "f_feon_slag")
PPM_COLUMNS = {"f_hm", "f_steel", "f_feon_slag"}
OPTIONAL_COLUMNS = {"f_steel", "f_feon_slag"}


# --------------------------------------------------------------------------
# Number formatting
# --------------------------------------------------------------------------


def fraction_to_ppm_text(x: float) -> str:
    """Exact decimal text of ``x * 1e6``; empty for NaN."""
    if math.isnan(x):
        return ""
    return format(Decimal(repr(float(x))).scaleb(6), "f")


def ppm_text_to_fraction(s: str) -> float:
    return float(Decimal(s).scaleb(-6))


def number_text(x: float) -> str:
    """Shortest text that parses back to the same float; empty for NaN."""
    return "" if math.isnan(x) else repr(float(x))


# --------------------------------------------------------------------------
# Heats CSV
# --------------------------------------------------------------------------


def heats_header(catalog: ScrapCatalog) -> List[str]:
    return list(FIXED_BEFORE) + [f"m_scrap_{s}" for s in catalog.scrap_ids] + list(FIXED_AFTER)


def save_heats(path, heats: Heats, catalog: Optional[ScrapCatalog] = None) -> None:
    """Write the wide heats CSV (masses in kg, fractions in ppm)."""
    catalog = catalog or ScrapCatalog.numbered(heats.n_scrap)
    if len(catalog) != heats.n_scrap:
        raise DomainError("catalog size does not match the heats")
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(heats_header(catalog))
        for i in range(len(heats)):
            row = [str(int(heats.heat_index[i]))]
            row += [number_text(v) for v in heats.scrap_mass[i]]
            for name in FIXED_AFTER:
                v = float(getattr(heats, name)[i])
                row.append(fraction_to_ppm_text(v) if name in PPM_COLUMNS else number_text(v))
            w.writerow(row)


def read_heats_csv(path) -> Tuple[Heats, ScrapCatalog]:
    """Parse a heats CSV into ``(Heats, ScrapCatalog)``.

    Every problem is collected with its 1-based file line number and
    reported together in a :class:`HeatsParseError`.
    """
    errors: List[Tuple[int, str]] = []
    with _open_r(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise HeatsParseError([(1, "missing header row")])
        header = [h.strip() for h in header]
        scrap_cols = [h for h in header if h.startswith("m_scrap_")]
        ids = [h[len("m_scrap_"):] for h in scrap_cols]
        expected = list(FIXED_BEFORE) + scrap_cols + list(FIXED_AFTER)
        if not scrap_cols:
            raise HeatsParseError([(1, "header has no m_scrap_<id> columns")])
        if header != expected:
            missing = [c for c in expected if c not in header]
            extra = [c for c in header if c not in expected]
            msg = "header does not match the heats schema"
            if missing:
                msg += f"; missing {missing}"
            if extra:
                msg += f"; unexpected {extra}"
            if not missing and not extra:
                msg += "; columns out of order"
            raise HeatsParseError([(1, msg)])
        try:
            catalog = ScrapCatalog(tuple(ids))
        except DomainError as exc:
            raise HeatsParseError([(1, str(exc))]) from None

        n = len(ids)
        rows, lines = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                errors.append((line_no, f"expected {len(header)} fields, found {len(rec)}"))
                continue
            vals = []
            ok = True
            for name, text in zip(header, rec):
                text = text.strip()
                if text == "":
                    if name in OPTIONAL_COLUMNS:
                        vals.append(math.nan)
                        continue
                    errors.append((line_no, f"{name} is empty"))
                    ok = False
                    continue
                try:
                    if name == "heat_index":
                        v = int(text)
                    elif name in PPM_COLUMNS:
                        v = ppm_text_to_fraction(text)
                    else:
                        v = float(text)
                except (ValueError, InvalidOperation):
                    errors.append((line_no, f"{name}: cannot parse {text!r}"))
                    ok = False
                    continue
                vals.append(v)
            if ok:
                rows.append(vals)
                lines.append(line_no)
    if errors:
        raise HeatsParseError(sorted(errors))
    if not rows:
        return Heats.empty(n), catalog
    a = np.array(rows, dtype=float)
    heats = Heats(
        heat_index=np.array([r[0] for r in rows], dtype=np.int64),
        scrap_mass=a[:, 1:1 + n],
        m_hm=a[:, 1 + n], f_hm=a[:, 2 + n], m_steel=a[:, 3 + n],
        f_steel=a[:, 4 + n], m_slag=a[:, 5 + n], f_feon_slag=a[:, 6 + n],
    )
    bad = heat_row_errors(heats)
    if bad:
        raise HeatsParseError([(lines[i], msg) for i, msg in bad])
    return heats, catalog


def load_heats(path) -> Heats:
    """Heats from a CSV file, in file order."""
    return read_heats_csv(path)[0]


# --------------------------------------------------------------------------
# Truth, NoiseSpec, traces, manifest
# --------------------------------------------------------------------------


def save_truth(path, heat_index, truth_alpha, catalog: ScrapCatalog, truth_c=None) -> None:
    """Ground-truth scrap fractions (ppm) and partition parameters per heat."""
    header = ["heat_index"] + [f"alpha_{s}" for s in catalog.scrap_ids]
    if truth_c is not None:
        header += ["c1", "c2"]
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, hi in enumerate(heat_index):
            row = [str(int(hi))] + [fraction_to_ppm_text(v) for v in truth_alpha[i]]
            if truth_c is not None:
                row += [number_text(v) for v in truth_c[i]]
            w.writerow(row)


def load_truth(path) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """``(heat_index, truth_alpha, truth_c or None)`` from a truth CSV."""
    with _open_r(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "heat_index":
            raise DomainError(f"{path}: not a truth file")
        n = sum(h.startswith("alpha_") for h in header)
        has_c = header[-2:] == ["c1", "c2"]
        hi, alpha, c = [], [], []
        for rec in reader:
            hi.append(int(rec[0]))
            alpha.append([ppm_text_to_fraction(s) for s in rec[1:1 + n]])
            if has_c:
                c.append([float(s) for s in rec[1 + n:3 + n]])
    alpha = np.array(alpha, dtype=float).reshape(-1, n)
    return np.array(hi, dtype=np.int64), alpha, (np.array(c, dtype=float) if has_c else None)


def noise_spec_to_json(spec: NoiseSpec, catalog: Optional[ScrapCatalog] = None, element: Optional[str] = None) -> dict:
    """Serializable form with unit-suffixed keys; values are fractions so the round trip is exact."""
    d: Dict[str, Any] = {}
    if element is not None:
        d["element"] = element
    if catalog is not None:
        d["scrap_ids"] = list(catalog.scrap_ids)
    d["gamma"] = spec.gamma
    d["q_frac"] = spec.q.tolist()
    d["Q_frac2"] = spec.Q.tolist()
    d["H_kg2"] = spec.H
    if spec.augmented:
        d["q_c"] = spec.q_c.tolist()
        d["Q_c"] = spec.Q_c.tolist()
    return d


def noise_spec_from_json(d: dict) -> NoiseSpec:
    try:
        return NoiseSpec(
            gamma=d["gamma"], q=d["q_frac"], Q=d["Q_frac2"], H=d["H_kg2"],
            q_c=d.get("q_c"), Q_c=d.get("Q_c"),
        )
    except KeyError as exc:
        raise DomainError(f"noise spec is missing {exc.args[0]!r}") from None


def save_noise_spec(path, spec: NoiseSpec, catalog=None, element=None) -> None:
    write_json(path, noise_spec_to_json(spec, catalog, element))


def load_noise_spec(path) -> NoiseSpec:
    return noise_spec_from_json(read_json(path))


def save_trace(path, trace, catalog: ScrapCatalog) -> None:
    """Per-heat filter output: prediction, innovation and per-type mean/sd (ppm)."""
    ids = catalog.scrap_ids
    n = len(ids)
    extra = trace.post_mean.shape[1] - n
    header = ["heat_index", "predicted_f_steel_ppm", "numerator_kg", "denominator_kg",
              "innovation_kg", "innovation_variance_kg2", "reflected", "jitter"]
    header += [f"mean_{s}_ppm" for s in ids] + [f"sd_{s}_ppm" for s in ids]
    if extra:
        header += ["c1", "c2", "sd_c1", "sd_c2"]
    sd = np.sqrt(trace.post_var)
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(len(trace)):
            row = [str(int(trace.heat_index[t]))]
            row += [_g(v) for v in (trace.predicted_f_steel[t] * 1e6, trace.predicted_numerator[t],
                                    trace.predicted_denominator[t], trace.innovation[t],
                                    trace.innovation_variance[t])]
            row += [str(int(trace.reflected[t])), _g(trace.jitter[t])]
            row += [_g(v * 1e6) for v in trace.post_mean[t, :n]] + [_g(v * 1e6) for v in sd[t, :n]]
            if extra:
                row += [_g(v) for v in trace.post_mean[t, n:]] + [_g(v) for v in sd[t, n:]]
            w.writerow(row)


def save_nnls_trace(path, result, catalog: ScrapCatalog) -> None:
    ids = catalog.scrap_ids
    header = ["heat_index", "predicted_f_steel_ppm", "n_rows", "n_unidentifiable"]
    header += [f"alpha_{s}_ppm" for s in ids]
    with _open_w(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(len(result)):
            row = [str(int(result.heat_index[t])), _g(result.predicted_f_steel[t] * 1e6),
                   str(int(result.n_rows[t])), str(int(result.unidentifiable[t].sum()))]
            row += [_g(v * 1e6) for v in result.alpha_hat[t]]
            w.writerow(row)


def _g(x) -> str:
    x = float(x)
    return "" if math.isnan(x) else format(x, ".17g")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config_hash: str, seed, version: str, outputs: List[str]) -> None:
    """Run manifest; deliberately free of timestamps and absolute paths."""
    write_json(path, {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "version": version,
        "outputs": {os.path.basename(p): file_digest(p) for p in sorted(outputs)},
    })


def write_json(path, obj) -> None:
    with _open_w(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with _open_r(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise DomainError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def _open_w(path):
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write: {exc.strerror}", str(path)) from exc


def _open_r(path):
    try:
        return open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot read: {exc.strerror}", str(path)) from exc


# --------------------------------------------------------------------------
# Run configuration
# --------------------------------------------------------------------------

NOISE_KEYS = {
    "gamma", "half_life_heats", "q_source", "q_ppm", "ols_init_heats", "ols_init_method",
    "p_inf_rel_sd", "Q_ppm2", "H_kg2", "m_steel_kg", "sd_f_steel_ppm", "m_hm_kg", "sd_f_hm_ppm",
    "q_c", "p_c_inf_rel_sd", "Q_c", "k",
}
WINDOW_KEYS = {"window_heats", "min_rows", "fixed_ell", "stride"}
SWEEP_KEYS = {"axis", "multipliers", "component", "workers"}
TOP_KEYS = {"element", "n_scrap", "scrap_ids", "seed", "n_heats", "burn_in_heats", "mode",
            "heats_path", "truth_path", "noise_spec_path", "noise", "window", "sweep", "plot_components"}


@dataclass
class RunConfig:
    """Everything a CLI run needs.

    Physical quantities carry unit suffixes in their JSON keys.  Within
    ``noise`` exactly one of ``gamma`` / ``half_life_heats`` may be given,
    and a stationary rule (``p_inf_rel_sd``) excludes an explicit ``Q_ppm2``
    (likewise ``p_c_inf_rel_sd`` and ``Q_c``).  ``q_source`` is ``preset``,
    ``literal`` (with ``q_ppm``) or ``ols-init``.
    """

    element: str = "Cu"
    n_scrap: int = 45
    scrap_ids: Optional[List[str]] = None
    seed: int = 0
    n_heats: int = 20000
    burn_in_heats: int = 5000
    mode: Optional[str] = None
    heats_path: Optional[str] = None
    truth_path: Optional[str] = None
    noise_spec_path: Optional[str] = None
    noise: Dict[str, Any] = field(default_factory=dict)
    window: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)
    plot_components: Optional[List[int]] = None

    def __post_init__(self):
        _no_unknown(self.noise, NOISE_KEYS, "noise")
        _no_unknown(self.window, WINDOW_KEYS, "window")
        _no_unknown(self.sweep, SWEEP_KEYS, "sweep")
        nz = self.noise
        if "gamma" in nz and "half_life_heats" in nz:
            raise DomainError("give either noise.gamma or noise.half_life_heats, not both")
        if "p_inf_rel_sd" in nz and "Q_ppm2" in nz:
            raise DomainError("noise.p_inf_rel_sd and noise.Q_ppm2 are mutually exclusive")
        if "p_c_inf_rel_sd" in nz and "Q_c" in nz:
            raise DomainError("noise.p_c_inf_rel_sd and noise.Q_c are mutually exclusive")
        src = nz.get("q_source", "preset")
        if src not in ("preset", "literal", "ols-init"):
            raise DomainError(f"noise.q_source must be preset, literal or ols-init, got {src!r}")
        if src == "literal" and "q_ppm" not in nz:
            raise DomainError("noise.q_source=literal needs noise.q_ppm")
        if src != "literal" and "q_ppm" in nz:
            raise DomainError("noise.q_ppm is only used with q_source=literal")
        if self.mode is not None and self.mode not in ("kalman", "ukf", "nnls"):
            raise DomainError(f"mode must be kalman, ukf or nnls, got {self.mode!r}")
        if self.n_heats < 1 or self.n_scrap < 1 or self.burn_in_heats < 0:
            raise DomainError("n_heats and n_scrap must be positive, burn_in_heats non-negative")
        if self.scrap_ids is not None and len(self.scrap_ids) != self.n_scrap:
            raise DomainError("scrap_ids must list n_scrap identifiers")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _no_unknown(d, TOP_KEYS, "config")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(read_json(path))

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in sorted(TOP_KEYS)}
        return {k: v for k, v in d.items() if v not in (None, {}, [])}

    def override(self, **flags) -> "RunConfig":
        """Copy with non-``None`` values replaced (``k`` and ``window`` go into their sections)."""
        d = self.to_dict()
        for key, value in flags.items():
            if value is None:
                continue
            if key == "k":
                d.setdefault("noise", {})["k"] = value
            elif key == "window":
                d.setdefault("window", {})["window_heats"] = value
            else:
                d[key] = value
        return RunConfig.from_dict(json.loads(json.dumps(d)))

    def config_hash(self, exclude=("heats_path", "truth_path", "noise_spec_path")) -> str:
        """SHA-256 of the canonical JSON, ignoring input locations."""
        d = {k: v for k, v in self.to_dict().items() if k not in exclude}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def catalog(self) -> ScrapCatalog:
        return ScrapCatalog(tuple(self.scrap_ids)) if self.scrap_ids else ScrapCatalog.numbered(self.n_scrap)


def _no_unknown(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise DomainError(f"{where} must be an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise DomainError(f"unknown key(s) in {where}: {unknown}")
