"""Command-line front end: ``ensvs select``, ``ensvs simulate`` and ``ensvs report``.

Data outputs are always files; progress goes to stderr. Exit codes are 0 on
success, 1 on validation or runtime failure and 2 on usage errors.

Every option may also come from ``--config FILE``, a ``key = value`` file whose
keys are option names (``B = 2000``, ``missing = impute``, ``k = 6,10`` for list
options). Flags on the command line take precedence over the file.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_csv
from .ensemble import EnsembleConfig, run_ensemble
from .errors import CsvFormatError, NumericalError, ValidationError
from .selectors import SelectorConfig
from .simulation import PRESETS, MethodSpec, SimulationConfig, run_experiment
from .threshold_cv import ThresholdCvConfig

log = logging.getLogger("ensvs")


# --------------------------------------------------------------------------- option parsing


def _threshold(text: str):
    if text.strip().lower() == "cv":
        return "cv"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1] or 'cv', got {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must lie in (0, 1], got {value}")
    return value


def _list_of(conv):
    def parse(text: str):
        items = [t.strip() for t in str(text).split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return [conv(t) for t in items]

    parse.__name__ = f"list of {getattr(conv, '__name__', 'values')}"
    return parse


def _choice(*names):
    def parse(text: str):
        if text not in names:
            raise argparse.ArgumentTypeError(f"invalid choice {text!r} (choose from {', '.join(names)})")
        return text

    parse.choices = names
    return parse


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _positive_int(text) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


# name -> (converter, default, help); None means required or computed from other options
SELECT_OPTIONS = {
    "data": (str, None, "input CSV with a header row"),
    "response": (str, None, "name of the response column"),
    "selector": (_choice("lasso", "stepwise", "knockoff"), None, "base selector"),
    "k": (_positive_int, None, "variables per regression instance"),
    "B": (_positive_int, None, "number of regression instances"),
    "r": (_threshold, 0.95, "selection threshold in (0, 1], or 'cv'"),
    "missing": (_choice("complete-case", "impute", "auto"), "impute", "missing-data policy per instance"),
    "seed": (int, 0, "master seed"),
    "out": (str, "ensvs_select", "output directory"),
    "na": (str, "NA", "token marking a missing cell"),
    "threads": (_positive_int, os.cpu_count() or 1, "worker processes"),
    "lasso_rule": (_choice("min", "one_se"), "min", "lambda rule inside each lasso instance"),
    "knockoff_q": (float, 0.10, "target FDR of each knockoff instance"),
    "knockoff_plus": (_flag, False, "use the knockoff+ threshold"),
    "cv_folds": (_positive_int, 5, "folds for threshold cross-validation"),
    "scheme": (_choice("partition", "iid"), "partition", "subset sampling scheme"),
    "log_instances": (_flag, False, "record every instance in result.json"),
}

SELECT_REQUIRED = ("data", "response", "selector", "k", "B")

SIMULATE_OPTIONS = {
    "preset": (_choice(*PRESETS), None, "standard design: low (p=100, k=6) or high (p=300, k=10)"),
    "n": (_positive_int, None, "observations (default: 200)"),
    "p": (_positive_int, None, "covariates (required without --preset)"),
    "rho": (_list_of(float), None, "compound-symmetry correlations (preset: 0,0.4; else 0)"),
    "snr": (_list_of(float), None, "signal-to-noise ratios (preset: 2,4; else 4)"),
    "s": (_positive_int, 8, "number of nonzero coefficients"),
    "mechanism": (_choice("none", "mcar", "mar"), "none", "missing-data mechanism"),
    "rate": (float, 0.2, "expected fraction of missing covariate cells"),
    "T": (_positive_int, 100, "replicate datasets per configuration"),
    "seed": (int, 0, "master seed"),
    "out": (str, "ensvs_simulate", "output directory"),
    "threads": (_positive_int, os.cpu_count() or 1, "worker processes"),
    "selector": (_list_of(_choice("lasso", "stepwise", "knockoff")), ["lasso", "stepwise", "knockoff"], "selectors"),
    "variant": (_list_of(_choice("algorithm", "standard")), ["algorithm", "standard"], "method variants"),
    "k": (_list_of(_positive_int), None, "subset sizes (default from preset, else 6)"),
    "B": (_list_of(_positive_int), [6000], "instance counts"),
    "r": (_list_of(_threshold), [0.95], "thresholds, numbers or 'cv'"),
    "missing": (_choice("complete-case", "impute", "auto"), "impute", "missing-data policy of the algorithm"),
    "lasso_rule": (_choice("min", "one_se"), "min", "lambda rule inside each lasso fit"),
    "knockoff_q": (float, 0.10, "target FDR of each knockoff fit"),
    "knockoff_plus": (_flag, False, "use the knockoff+ threshold"),
}

FIGURES = ("fig1", "fig2", "fig3", "fig4", "tables")


def _add_options(parser: argparse.ArgumentParser, options: dict, required=()) -> None:
    for name, (conv, default, text) in options.items():
        flag = "--" + name.replace("_", "-")
        if name in required:
            text += " (required)"
        elif default is not None:
            shown = ",".join(map(str, default)) if isinstance(default, list) else default
            text += f" (default: {shown})"
        if conv is _flag:
            parser.add_argument(flag, dest=name, nargs="?", const=True, type=_flag, default=None, help=text)
        else:
            names = getattr(conv, "choices", None)
            metavar = "{" + "|".join(names) + "}" if names else name.upper()
            parser.add_argument(flag, dest=name, type=conv, default=None, metavar=metavar, help=text)
    parser.add_argument("--config", type=str, default=None, help="key = value file of option defaults")


def _read_config(path: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    text = Path(path).read_text(encoding="utf-8")
    parser.read_string("[ensvs]\n" + text, source=path)
    return {k.replace("-", "_"): v for k, v in parser["ensvs"].items()}


def _resolve(parser: argparse.ArgumentParser, args, options: dict, required=()) -> dict:
    """Merge flags over config file over built-in defaults, converting config strings."""
    from_file = {}
    if args.config:
        try:
            from_file = _read_config(args.config)
        except (OSError, configparser.Error) as exc:
            parser.error(f"cannot read --config {args.config}: {exc}")
        unknown = sorted(set(from_file) - set(options))
        if unknown:
            parser.error(f"unknown keys in {args.config}: {', '.join(unknown)}")
    out = {}
    for name, (conv, default, _) in options.items():
        value = getattr(args, name)
        if value is None and name in from_file:
            try:
                value = conv(from_file[name])
            except (argparse.ArgumentTypeError, ValueError) as exc:
                parser.error(f"config key {name!r}: {exc}")
        if value is None:
            value = default
        out[name] = value
    missing = [n for n in required if out.get(n) is None]
    if missing:
        parser.error("the following arguments are required: " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensvs", description="Ensemble variable selection on random subsets of covariates.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", parents=[common], help="run the ensemble on a CSV dataset")
    _add_options(p, SELECT_OPTIONS, SELECT_REQUIRED)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("simulate", parents=[common], help="run the simulation study")
    _add_options(p, SIMULATE_OPTIONS)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="plot-ready CSV from simulation results")
    p.add_argument("--in", dest="indir", required=True, help="directory written by 'ensvs simulate'")
    p.add_argument("--figure", required=True, choices=FIGURES)
    p.add_argument("--out", default=None, help="output CSV (default: <in>/<figure>.csv)")
    p.set_defaults(handler=cmd_report)
    return parser


# --------------------------------------------------------------------------- helpers


def _write_json(path: Path, obj) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _manifest(command: str, argv, config: dict, seed: int, artifacts: dict, started: float, **extra) -> dict:
    return {
        "command": command,
        "argv": list(argv),
        "config": config,
        "master_seed": seed,
        "artifacts": artifacts,
        "version": __version__,
        "timings": {"wall_clock_s": round(time.perf_counter() - started, 3)},
        **extra,
    }


# --------------------------------------------------------------------------- commands


def cmd_select(parser, args, argv) -> int:
    started = time.perf_counter()
    opts = _resolve(parser, args, SELECT_OPTIONS, required=SELECT_REQUIRED)
    data = load_csv(opts["data"], opts["response"], na_token=opts["na"])
    selector = SelectorConfig(
        kind=opts["selector"],
        lasso_rule=opts["lasso_rule"],
        knockoff_fdr_q=opts["knockoff_q"],
        knockoff_plus=opts["knockoff_plus"],
    )
    cfg = EnsembleConfig(
        k=opts["k"],
        B=opts["B"],
        threshold=opts["r"],
        missing_policy=opts["missing"],
        master_seed=opts["seed"],
        selector=selector,
        scheme=opts["scheme"],
        log_instances=opts["log_instances"],
        threshold_cv=ThresholdCvConfig(folds=opts["cv_folds"], seed=opts["seed"]),
    )
    log.info("select: n=%d p=%d missing=%.3f selector=%s k=%d B=%d",
             data.n, data.p, data.missing_fraction, selector.kind, cfg.k, cfg.B)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = run_ensemble(data, cfg, n_jobs=opts["threads"])
    for w in caught:
        log.warning("warning: %s", w.message)

    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    artifacts = {"result": str(out / "result.json"), "ratios": str(out / "ratios.csv")}
    _write_json(out / "result.json", result.to_dict())
    with (out / "ratios.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "appeared", "selected", "ratio", "selected_flag"])
        for j, name in enumerate(result.column_names):
            w.writerow([name, int(result.tally.appeared[j]), int(result.tally.selected[j]),
                        repr(float(result.ratios[j])), int(result.selected[j])])
    extra = {"chosen_threshold": float(result.threshold_used)}
    if result.cv_curve is not None:
        artifacts["cv_curve"] = str(out / "cv_curve.csv")
        with (out / "cv_curve.csv").open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "mean_mse", "sd_mse"])
            for row in result.cv_curve:
                w.writerow([repr(float(v)) for v in row])
    artifacts["manifest"] = str(out / "manifest.json")
    _write_json(out / "manifest.json", _manifest("select", argv, opts, opts["seed"], artifacts, started, **extra))
    log.info("selected %d of %d variables at threshold %.4g; outputs in %s",
             int(result.selected.sum()), data.p, result.threshold_used, out)
    return 0


def _simulation_grid(parser, opts: dict):
    preset = opts["preset"]
    if preset is None and opts["p"] is None:
        parser.error("either --preset or --p is required")
    base = PRESETS[preset] if preset else {"n": 200, "p": opts["p"], "k": 6}
    n = opts["n"] or base["n"]
    p = opts["p"] or base["p"]
    rhos = opts["rho"] or ([0.0, 0.4] if preset else [0.0])
    snrs = opts["snr"] or ([2.0, 4.0] if preset else [4.0])
    ks = opts["k"] or [base["k"]]
    rate = opts["rate"] if opts["mechanism"] != "none" else 0.0
    grid = []
    for rho in rhos:
        for snr in snrs:
            sim = SimulationConfig(n=n, p=p, rho=rho, snr=snr, s=opts["s"], mechanism=opts["mechanism"],
                                   missing_rate=rate)
            for sel in opts["selector"]:
                common = dict(lasso_rule=opts["lasso_rule"], knockoff_plus=opts["knockoff_plus"],
                              knockoff_fdr_q=opts["knockoff_q"])
                if "algorithm" in opts["variant"]:
                    for k in ks:
                        for B in opts["B"]:
                            for thr in opts["r"]:
                                grid.append((sim, MethodSpec("algorithm", sel, k=k, B=B, threshold=thr,
                                                             missing_policy=opts["missing"], **common)))
                if "standard" in opts["variant"]:
                    grid.append((sim, MethodSpec("standard", sel, **common)))
    return grid


def cmd_simulate(parser, args, argv) -> int:
    started = time.perf_counter()
    opts = _resolve(parser, args, SIMULATE_OPTIONS)
    grid = _simulation_grid(parser, opts)
    log.info("simulate: %d methods x %d configurations, T=%d", len({m for _, m in grid}),
             len({s for s, _ in grid}), opts["T"])
    with warnings.catch_warnings():
        # the B*k/p advisory would repeat for every replicate
        warnings.simplefilter("ignore")
        results = run_experiment(grid, T=opts["T"], master_seed=opts["seed"], n_jobs=opts["threads"])
    out = Path(opts["out"])
    artifacts = results.write(out)
    artifacts["manifest"] = str(out / "manifest.json")
    _write_json(out / "manifest.json", _manifest("simulate", argv, opts, opts["seed"], artifacts, started))
    log.info("wrote %d rows to %s", len(results.rows), artifacts["results"])
    return 0


def _load_results(indir: Path):
    import pandas as pd

    path = indir / "results.csv"
    if not path.is_file():
        raise ValidationError(f"{indir}: no results.csv (run 'ensvs simulate --out {indir}' first)")
    df = pd.read_csv(path, keep_default_na=False, dtype=str)
    if df.empty:
        raise ValidationError(f"{path}: no result rows")
    df = df[df["status"] == "ok"].copy()
    if df.empty:
        raise ValidationError(f"{path}: every replicate failed")
    for col in ("tp", "fn", "fp"):
        df[col] = df[col].astype(float)
    return df


def _summarise(df, keys):
    g = df.groupby(list(keys), sort=True)
    out = g.agg(mean_tp=("tp", "mean"), mean_fn=("fn", "mean"), mean_fp=("fp", "mean"),
                sd_tp=("tp", "std"), sd_fp=("fp", "std"), replicates=("tp", "size")).reset_index()
    return out


def report_frame(df, figure: str):
    """Long-format table for one figure (or the appendix tables) from per-replicate rows."""
    cfg = ["rho", "snr", "mechanism"]
    if figure == "fig1":
        s = _summarise(df, cfg + ["method", "variant", "options", "threshold"])
        long = s.melt(id_vars=cfg + ["method", "variant", "options", "threshold"],
                      value_vars=["mean_tp", "mean_fp"], var_name="metric", value_name="value")
        long["metric"] = long["metric"].str.replace("mean_", "", regex=False)
        return long
    alg = df[df["variant"] == "algorithm"]
    if figure in ("fig2", "fig3", "fig4") and alg.empty:
        raise ValidationError(f"{figure} needs algorithm rows in the results")
    if figure == "fig2":
        s = _summarise(alg, cfg + ["method", "options", "threshold", "k"])
        s["k"] = s["k"].astype(int)
        s = s.sort_values(cfg + ["method", "options", "threshold", "k"])
        return s[cfg + ["method", "options", "threshold", "k", "mean_tp", "mean_fp"]]
    if figure == "fig3":
        s = _summarise(alg, cfg + ["method", "options", "threshold", "k", "B"])
        s["B"] = s["B"].astype(int)
        s = s.rename(columns={"method": "selector"}).sort_values(cfg + ["selector", "B"])
        return s[["B", "selector", "sd_tp", "sd_fp"] + cfg + ["options", "threshold", "k"]]
    if figure == "fig4":
        s = _summarise(alg, cfg + ["method", "options", "k", "B", "threshold"])
        med = (alg[alg["chosen_threshold"] != ""]
               .assign(chosen=lambda d: d["chosen_threshold"].astype(float))
               .groupby(cfg + ["method", "options", "k", "B", "threshold"])["chosen"].median()
               .rename("median_chosen_threshold").reset_index())
        s = s.merge(med, how="left", on=cfg + ["method", "options", "k", "B", "threshold"])
        return s[cfg + ["method", "options", "k", "B", "threshold", "mean_tp", "mean_fp", "median_chosen_threshold"]]
    # tables
    s = _summarise(df, cfg + ["method", "variant", "options", "threshold"])
    s = s.rename(columns={"mechanism": "mech", "mean_tp": "TP", "mean_fn": "FN", "mean_fp": "FP"})
    s["mech"] = s["mech"].str.upper()
    s["method"] = s["method"].str.capitalize()
    s = s.sort_values(["method", "rho", "snr", "mech", "variant"])
    return s[["rho", "snr", "mech", "method", "variant", "TP", "FN", "FP", "options", "threshold"]]


def cmd_report(parser, args, argv) -> int:
    indir = Path(args.indir)
    if not indir.is_dir():
        raise ValidationError(f"{indir}: results directory does not exist")
    frame = report_frame(_load_results(indir), args.figure)
    out = Path(args.out) if args.out else indir / f"{args.figure}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, float_format="%.6g", lineterminator="\n")
    log.info("wrote %s (%d rows)", out, len(frame))
    return 0


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="ensvs: %(message)s", force=True)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        return args.handler(sub, args, argv)
    except (ValidationError, CsvFormatError, NumericalError, FileNotFoundError) as exc:
        print(f"ensvs {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
