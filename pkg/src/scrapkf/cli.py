"""Command-line entry point: ``scrapkf {derive-params,simulate,fit,evaluate,sweep}``.

Failures exit with status 1 and a JSON object on stderr; usage errors exit
with status 2 (argparse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .baseline import windowed_nnls
from .evalkit import evaluate, export_report, misspecification_sweep, trace_coverage, write_sweep
from .exceptions import HeatsParseError, ScrapKFError
from .filters import run_filter
from .io import (
    RunConfig,
    load_noise_spec,
    load_truth,
    read_heats_csv,
    save_heats,
    save_nnls_trace,
    save_noise_spec,
    save_trace,
    save_truth,
    write_json,
    write_manifest,
)
from .recipes import config_k, element_spec, resolve_noise_spec, window_config
from .synthgen import SyntheticDataset, make_dataset


class CLIError(ScrapKFError):
    pass


def _k_arg(text):
    try:
        return float(text)
    except ValueError:
        if text.replace(" ", "") == "m+k=3":
            return "m+k=3"
        raise argparse.ArgumentTypeError(f"expected a number or 'm+k=3', got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--element", help="element symbol, e.g. Cu or Cr")
    common.add_argument("--seed", type=int)
    common.add_argument("--mode", choices=("kalman", "ukf", "nnls"))
    common.add_argument("--burn-in", type=int, dest="burn_in_heats")
    common.add_argument("--window", type=int)
    common.add_argument("--k", type=_k_arg)
    common.add_argument("--heats", dest="heats_path", help="heats CSV")
    common.add_argument("--truth", dest="truth_path", help="truth CSV (synthetic runs)")
    common.add_argument("--noise-spec", dest="noise_spec_path", help="NoiseSpec JSON from derive-params")

    p = argparse.ArgumentParser(prog="scrapkf", description="Scrap composition estimation from heat records.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("derive-params", parents=[common], help="resolve hyperparameters into a NoiseSpec JSON")
    sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    sub.add_parser("fit", parents=[common], help="run a filter or the NNLS baseline and write the trace")
    sub.add_parser("evaluate", parents=[common], help="fit and write error summaries and plot data")
    sub.add_parser("sweep", parents=[common], help="misspecification sweep over one hyperparameter")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    return cfg.override(
        element=args.element, seed=args.seed, mode=args.mode, burn_in_heats=args.burn_in_heats,
        window=args.window, k=args.k, heats_path=args.heats_path, truth_path=args.truth_path,
        noise_spec_path=args.noise_spec_path,
    )


def _heats(cfg: RunConfig, required=True):
    if not cfg.heats_path:
        if required:
            raise CLIError("this command needs heats (--heats or heats_path)")
        return None, cfg.catalog
    return read_heats_csv(cfg.heats_path)


def _spec(cfg: RunConfig, heats):
    if cfg.noise_spec_path:
        return load_noise_spec(cfg.noise_spec_path)
    return resolve_noise_spec(cfg, heats)


def _mode(cfg: RunConfig) -> str:
    slag = element_spec(cfg).transfers_to_slag
    mode = cfg.mode or ("ukf" if slag else "kalman")
    if mode == "kalman" and slag:
        raise CLIError(f"{cfg.element} partitions into the slag; use --mode ukf or nnls")
    if mode == "ukf" and not slag:
        raise CLIError(f"{cfg.element} stays in the steel; use --mode kalman or nnls")
    return mode


def _truth(cfg: RunConfig, heats):
    if not cfg.truth_path:
        return None, None
    hi, alpha, c = load_truth(cfg.truth_path)
    if len(hi) != len(heats) or (hi != heats.heat_index).any():
        raise CLIError("truth file is not aligned with the heats file")
    return alpha, c


def _fit(cfg, heats, catalog, out):
    mode = _mode(cfg)
    element = element_spec(cfg)
    if mode == "nnls":
        result = windowed_nnls(heats, element, window_config(cfg))
        path = os.path.join(out, "trace_nnls.csv")
        save_nnls_trace(path, result, catalog)
        return mode, result, path
    spec = _spec(cfg, heats)
    trace = run_filter(heats, spec, element, k=config_k(cfg))
    path = os.path.join(out, f"trace_{mode}.csv")
    save_trace(path, trace, catalog)
    return mode, trace, path


def cmd_derive_params(cfg, out):
    heats, catalog = _heats(cfg, required=cfg.noise.get("q_source") == "ols-init")
    spec = resolve_noise_spec(cfg, heats)
    path = os.path.join(out, "noise_spec.json")
    save_noise_spec(path, spec, catalog, cfg.element)
    return [path]


def cmd_simulate(cfg, out):
    if cfg.noise.get("q_source") == "ols-init":
        raise CLIError("simulate needs q_source preset or literal")
    spec = resolve_noise_spec(cfg)
    catalog = cfg.catalog
    ds = make_dataset(element_spec(cfg), spec, cfg.seed, n_heats=cfg.n_heats, catalog=catalog)
    paths = [os.path.join(out, n) for n in ("heats.csv", "truth.csv", "noise_spec.json")]
    save_heats(paths[0], ds.heats, catalog)
    save_truth(paths[1], ds.heats.heat_index, ds.truth_alpha, catalog, ds.truth_c)
    save_noise_spec(paths[2], spec, catalog, cfg.element)
    return paths


def cmd_fit(cfg, out):
    heats, catalog = _heats(cfg)
    return [_fit(cfg, heats, catalog, out)[2]]


def cmd_evaluate(cfg, out):
    heats, catalog = _heats(cfg)
    mode, fitted, trace_path = _fit(cfg, heats, catalog, out)
    alpha, c = _truth(cfg, heats)
    summary = evaluate(fitted, heats, cfg.burn_in_heats, alpha, c)
    labels = list(catalog.scrap_ids)
    traces, comps, extra = {}, None, []
    if mode != "nnls":
        traces[mode] = fitted
        if cfg.plot_components:
            comps = [catalog.index(s) for s in cfg.plot_components]
        if alpha is not None:
            cov = trace_coverage(fitted, alpha, cfg.burn_in_heats, comps)
            extra.append(os.path.join(out, "coverage.json"))
            write_json(extra[-1], {"band_coverage": cov, "burn_in_heats": cfg.burn_in_heats})
    paths = export_report(out, {mode: summary}, traces, heats, labels, alpha, c, comps)
    return [trace_path] + paths + extra


def cmd_sweep(cfg, out):
    heats, catalog = _heats(cfg)
    if _mode(cfg) == "nnls":
        raise CLIError("sweeps apply to the filters, not to nnls")
    alpha, c = _truth(cfg, heats)
    spec = _spec(cfg, heats)
    sw = cfg.sweep
    if "axis" not in sw or "multipliers" not in sw:
        raise CLIError("config.sweep needs axis and multipliers")
    component = catalog.index(str(sw["component"])) if "component" in sw else min(35, len(catalog) - 1)
    ds = SyntheticDataset(catalog, element_spec(cfg), heats, alpha, c, None, cfg.seed, spec)
    rows = misspecification_sweep(ds, spec, sw["axis"], sw["multipliers"], cfg.burn_in_heats, component,
                                  config_k(cfg), int(sw.get("workers", 1)))
    path = os.path.join(out, "sweep.csv")
    write_sweep(path, rows)
    return [path]


COMMANDS = {
    "derive-params": cmd_derive_params,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _error_payload(exc) -> dict:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, HeatsParseError):
        payload["errors"] = [{"line": ln, "message": msg} for ln, msg in exc.errors]
    if isinstance(exc, OSError) and exc.filename:
        payload["path"] = exc.filename
    return payload


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        outputs = COMMANDS[args.command](cfg, args.out)
        manifest = os.path.join(args.out, "manifest.json")
        write_manifest(manifest, args.command, cfg.config_hash(), cfg.seed, __version__, outputs)
    except (ScrapKFError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(json.dumps(_error_payload(exc), sort_keys=True) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
