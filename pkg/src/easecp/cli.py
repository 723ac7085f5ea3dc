"""Command-line interface.

One executable, subcommand style: synth, calibrate, predict, evaluate,
tune, compare, property-exp. Outputs are machine-readable JSON (plus CSV
where it helps); every output embeds the tool version, the fully resolved
configuration, and the seed, and rerunning the same command reproduces the
output byte for byte.

Exit codes: 0 success, 1 validation/configuration error, 2 I/O error
(argparse usage errors also exit 2).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .calibrate import (
    DEFAULT_MIN_BIN_COUNT,
    fit_global,
    fit_mondrian,
    load_model,
    predict,
    save_model,
)
from .data import PredictionOutput, RegressionDataset
from .errors import (
    CalibrationError,
    ConfigError,
    FormatError,
    MetricError,
    ToolkitError,
    ValidationError,
)
from .experiments import (
    CompareConfig,
    PropertyConfig,
    TuneGrid,
    auto_kreg,
    compare_run,
    metric_validation,
    tune,
)
from .io import load_dataset, write_dataset
from .metrics import DEFAULT_SSCV_STRATA, evaluate_predictions
from .scores import ScoreSpec
from .synth import SynthConfig, generate, generate_regression

CLASSIFICATION_SCORES = ("lac", "aps", "raps", "saps")


def _meta(command: str, args: argparse.Namespace, skip=("func",)) -> dict:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip and not callable(v)}
    return {
        "tool": "easecp",
        "version": __version__,
        "command": command,
        "seed": getattr(args, "seed", None),
        "config": config,
    }


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _floats(text: str) -> list:
    return [float(p) for p in text.split(",") if p]


def _ints(text: str) -> list:
    return [int(p) for p in text.split(",") if p]


def _parse_strata(text: str):
    strata = []
    for part in text.split(","):
        lo, _, hi = part.partition("-")
        strata.append((int(lo), None if hi == "" else int(hi)))
    return tuple(strata)


def _build_spec(args: argparse.Namespace, kind: str, ds=None) -> ScoreSpec:
    kreg = getattr(args, "raps_kreg", None)
    if kind == "raps" and kreg is None:
        if ds is None:
            raise ConfigError("raps needs --raps-kreg (or a dataset to derive it from)")
        kreg = auto_kreg(ds, args.alpha)
    return ScoreSpec(
        kind=kind,
        raps_lambda=getattr(args, "raps_lambda", None),
        raps_kreg=kreg,
        saps_w=getattr(args, "saps_w", None),
        randomized=not args.deterministic,
        seed=args.seed,
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        n=args.n, k=args.k, l=args.l, target_accuracy=args.accuracy,
        difficulty_spread=args.spread, noise_coupling=args.coupling, seed=args.seed,
    )
    ds = generate_regression(cfg) if args.regression else generate(cfg)
    write_dataset(ds, args.output, args.format)
    return 0


def _cmd_calibrate(args) -> int:
    ds = load_dataset(args.data, args.format)
    is_reg = isinstance(ds, RegressionDataset)
    if is_reg != (args.score in ("reg_cp", "reg_cpa")):
        raise ConfigError(f"score {args.score!r} does not match the dataset kind")
    spec = _build_spec(args, args.score, ds)
    if args.mode == "mondrian":
        model = fit_mondrian(ds, spec, args.alpha, args.bins,
                             split_binning=args.split_binning,
                             min_bin_count=args.min_bin_count)
    else:
        model = fit_global(ds, spec, args.alpha)
    doc = json.loads(model.to_json())
    doc["cli"] = _meta("calibrate", args)
    _write_json(args.output, doc)
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.data, args.format)
    out = predict(model, ds)
    doc = _meta("predict", args)
    doc["task"] = out.kind
    doc["alpha"] = model.alpha
    doc["n"] = out.n_examples
    doc["covered"] = [int(c) for c in out.covered]
    if out.kind == "classification":
        doc["size"] = [int(s) for s in out.size]
    else:
        doc["size"] = [float(s) for s in out.size]
        doc["lo"] = [float(v) for v in out.lo]
        doc["hi"] = [float(v) for v in out.hi]
    doc["bin"] = None if out.bin_index is None else [int(b) for b in out.bin_index]
    if args.sets and out.kind == "classification":
        doc["sets"] = [[int(j) for j in s] for s in out.label_sets()]
    _write_json(args.output, doc)
    if args.csv:
        _write_prediction_csv(args.csv, out, include_sets=args.sets)
    return 0


def _write_prediction_csv(path: str, out: PredictionOutput, include_sets: bool) -> None:
    lines = []
    if out.kind == "classification":
        header = "index,covered,size,bin"
        if include_sets:
            header += ",set"
        lines.append(header)
        sets = out.label_sets() if include_sets else None
        for i in range(out.n_examples):
            b = "" if out.bin_index is None else str(int(out.bin_index[i]))
            row = f"{i},{int(out.covered[i])},{int(out.size[i])},{b}"
            if include_sets:
                row += "," + " ".join(str(int(j)) for j in sets[i])
            lines.append(row)
    else:
        lines.append("index,covered,width,lo,hi,bin")
        for i in range(out.n_examples):
            b = "" if out.bin_index is None else str(int(out.bin_index[i]))
            lines.append(
                f"{i},{int(out.covered[i])},{out.size[i]!r},{out.lo[i]!r},{out.hi[i]!r},{b}"
            )
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_evaluate(args) -> int:
    ds = load_dataset(args.data, args.format)
    with open(args.predictions, "r", encoding="ascii") as fh:
        pred_doc = json.load(fh)
    for key in ("task", "alpha", "covered", "size"):
        if key not in pred_doc:
            raise FormatError(f"predictions file is missing the {key!r} field")
    task = pred_doc["task"]
    covered = np.asarray(pred_doc["covered"], dtype=bool)
    size = np.asarray(pred_doc["size"], dtype=np.float64)
    if task == "classification":
        out = PredictionOutput(kind=task, covered=covered, size=size.astype(np.int64))
    else:
        out = PredictionOutput(
            kind=task, covered=covered, size=size,
            lo=np.asarray(pred_doc["lo"], dtype=np.float64),
            hi=np.asarray(pred_doc["hi"], dtype=np.float64),
        )
    alpha = float(pred_doc["alpha"]) if args.alpha is None else args.alpha
    strata = _parse_strata(args.sscv_strata) if args.sscv_strata else DEFAULT_SSCV_STRATA
    report = evaluate_predictions(ds, out, alpha, eval_bins=args.eval_bins,
                                  strata=strata, escv_min_count=args.escv_min_count)
    doc = _meta("evaluate", args)
    doc["report"] = report.to_dict()
    _write_json(args.output, doc)
    if args.csv:
        with open(args.csv, "w", encoding="ascii", newline="\n") as fh:
            fh.write(report.csv_header() + "\n" + report.csv_row() + "\n")
    return 0


def _cmd_tune(args) -> int:
    ds_cal = load_dataset(args.cal, args.format)
    ds_tune = load_dataset(args.tune_data, args.format)
    grid = TuneGrid(
        bins=tuple(_ints(args.grid_bins)),
        sigma_tags=tuple(t for t, _, _ in args.alt_ease) if args.alt_ease else (),
        saps_w=tuple(_floats(args.grid_w)) if args.grid_w else TuneGrid().saps_w,
        raps_lambda=tuple(_floats(args.grid_lambda)) if args.grid_lambda else TuneGrid().raps_lambda,
    )
    ease_by_tag = None
    if args.alt_ease:
        from .binning import compute_ease

        ease_by_tag = {}
        for tag, cal_path, tune_path in args.alt_ease:
            ease_by_tag[tag] = (
                compute_ease(load_dataset(cal_path, args.format)),
                compute_ease(load_dataset(tune_path, args.format)),
            )
    result = tune(ds_cal, ds_tune, args.family, args.alpha, grid,
                  objective=args.objective, eval_bins=args.eval_bins,
                  min_bin_count=args.min_bin_count, seed=args.seed,
                  randomized=not args.deterministic, split_binning=args.split_binning,
                  ease_by_tag=ease_by_tag)
    doc = _meta("tune", args, skip=("func", "alt_ease"))
    doc["family"] = result.family
    doc["objective"] = result.objective
    doc["best_params"] = result.best_params
    doc["best_value"] = result.best_value
    doc["table"] = [{"params": p, "value": v} for p, v in result.table]
    _write_json(args.output, doc)
    return 0


def _cmd_compare(args) -> int:
    ds = load_dataset(args.data, args.format)
    grid = None
    if args.tune:
        grid = TuneGrid(
            bins=tuple(_ints(args.grid_bins)),
            saps_w=tuple(_floats(args.grid_w)) if args.grid_w else TuneGrid().saps_w,
            raps_lambda=tuple(_floats(args.grid_lambda)) if args.grid_lambda else TuneGrid().raps_lambda,
        )
    cfg = CompareConfig(
        algorithms=tuple(args.algorithms.split(",")),
        alphas=tuple(_floats(args.alphas)),
        repeats=args.repeats,
        seed=args.seed,
        n_val=args.n_val,
        n_test=args.n_test,
        eval_bins=args.eval_bins,
        fit_bins=args.fit_bins,
        raps_lambda=args.raps_lambda,
        saps_w=args.saps_w,
        randomized=not args.deterministic,
        split_binning=args.split_binning,
        min_bin_count=args.min_bin_count,
        tune_enabled=args.tune,
        tune_grid=grid,
    )
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    report = compare_run(ds, cfg, threads=threads)
    doc = _meta("compare", args)
    doc["report"] = report.to_dict()
    _write_json(args.output, doc)
    if args.csv:
        with open(args.csv, "w", encoding="ascii", newline="\n") as fh:
            fh.write(report.to_csv())
    if args.tables:
        with open(args.tables, "w", encoding="ascii", newline="\n") as fh:
            fh.write(report.to_tables_csv())
    return 0


def _cmd_property_exp(args) -> int:
    ds = load_dataset(args.data, args.format)
    if args.paper_scale:
        pcfg = PropertyConfig(seed=args.seed, disjoint=not args.overlap)
    else:
        pcfg = PropertyConfig(
            r_trials=args.r_trials, trial_size=args.trial_size,
            subset_size=args.subset, n_draws=args.draws,
            seed=args.seed, disjoint=not args.overlap,
        )
    specs = {}
    for name in args.algorithms.split(","):
        if name not in CLASSIFICATION_SCORES:
            raise ConfigError(f"property-exp supports {CLASSIFICATION_SCORES}, got {name!r}")
        specs[name] = _build_spec(args, name, ds)
    report = metric_validation(ds, specs, pcfg, alpha=args.alpha, eval_bins=args.eval_bins)
    doc = _meta("property-exp", args)
    doc["report"] = report.to_dict()
    _write_json(args.output, doc)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, with_scores: bool = False) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (all randomness derives from it)")
    p.add_argument("--format", choices=("binary", "csv"), default=None,
                   help="dataset format (default: inferred from the extension)")
    if with_scores:
        p.add_argument("--alpha", type=float, required=True, help="target miscoverage rate")
        p.add_argument("--raps-lambda", type=float, default=None)
        p.add_argument("--raps-kreg", type=int, default=None)
        p.add_argument("--saps-w", type=float, default=None)
        p.add_argument("--deterministic", action="store_true",
                       help="disable score randomization (u = 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="easecp", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--version", action="version", version=f"easecp {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--l", type=int, default=5)
    p.add_argument("--accuracy", type=float, default=0.75)
    p.add_argument("--spread", type=float, default=1.0, help="difficulty spread in [0, 1]")
    p.add_argument("--coupling", type=float, default=1.0, help="difficulty/noise coupling strength")
    p.add_argument("--regression", action="store_true")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate", help="fit a conformal model")
    p.add_argument("--data", required=True)
    p.add_argument("--score", required=True,
                   choices=CLASSIFICATION_SCORES + ("reg_cp", "reg_cpa"))
    p.add_argument("--mode", choices=("global", "mondrian"), default="global")
    p.add_argument("--bins", type=int, default=10, help="bin count for mondrian mode")
    p.add_argument("--split-binning", action="store_true",
                   help="fit bin edges on half the calibration set, thresholds on the other")
    p.add_argument("--min-bin-count", type=int, default=DEFAULT_MIN_BIN_COUNT)
    p.add_argument("-o", "--output", required=True)
    _add_common(p, with_scores=True)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("predict", help="build prediction sets/intervals")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sets", action="store_true", help="embed the label sets in the output")
    p.add_argument("--csv", default=None, help="also write a per-example CSV")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="compute the metric battery for predictions")
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--alpha", type=float, default=None,
                   help="override the alpha recorded in the predictions file")
    p.add_argument("--eval-bins", type=int, default=50)
    p.add_argument("--sscv-strata", default=None,
                   help="comma-separated size ranges, e.g. 0-1,2-3,4-10,11-100,101-")
    p.add_argument("--escv-min-count", type=int, default=1)
    p.add_argument("--csv", default=None, help="also write a one-row CSV")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("tune", help="grid-search hyperparameters")
    p.add_argument("--cal", required=True)
    p.add_argument("--tune-data", required=True)
    p.add_argument("--family", required=True, choices=("raps", "saps", "olac", "osaps", "ocpa"))
    p.add_argument("--objective", choices=("t_ss", "sscv"), default=None)
    p.add_argument("--grid-bins", default="10,20,30")
    p.add_argument("--grid-w", default=None)
    p.add_argument("--grid-lambda", default=None)
    p.add_argument("--alt-ease", nargs=3, action="append", metavar=("TAG", "CAL", "TUNE"),
                   help="alternative transformed-score dataset pair for a sigma tag")
    p.add_argument("--eval-bins", type=int, default=50)
    p.add_argument("--min-bin-count", type=int, default=DEFAULT_MIN_BIN_COUNT)
    p.add_argument("--split-binning", action="store_true")
    p.add_argument("-o", "--output", required=True)
    _add_common(p, with_scores=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("compare", help="repeated-split algorithm comparison")
    p.add_argument("--data", required=True)
    p.add_argument("--algorithms", default="lac,aps,raps,saps,olac,osaps")
    p.add_argument("--alphas", default="0.1")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--n-val", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--eval-bins", type=int, default=50)
    p.add_argument("--fit-bins", type=int, default=10)
    p.add_argument("--tune", action="store_true", help="tune hyperparameters per repeat")
    p.add_argument("--grid-bins", default="10,20,30")
    p.add_argument("--grid-w", default=None)
    p.add_argument("--grid-lambda", default=None)
    p.add_argument("--raps-lambda", type=float, default=0.01)
    p.add_argument("--saps-w", type=float, default=0.1)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--split-binning", action="store_true")
    p.add_argument("--min-bin-count", type=int, default=DEFAULT_MIN_BIN_COUNT)
    p.add_argument("--threads", type=int, default=0,
                   help="cap internal parallelism (default: available cores)")
    p.add_argument("--csv", default=None)
    p.add_argument("--tables", default=None, help="write a wide per-metric table CSV")
    p.add_argument("-o", "--output", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("property-exp", help="metric-validation experiment")
    p.add_argument("--data", required=True)
    p.add_argument("--algorithms", default="lac")
    p.add_argument("--r-trials", type=int, default=50)
    p.add_argument("--trial-size", type=int, default=1000)
    p.add_argument("--subset", type=int, default=50)
    p.add_argument("--draws", type=int, default=1000)
    p.add_argument("--paper-scale", action="store_true",
                   help="use the full protocol sizes (R=1000, M=2000, m=100, T=10000)")
    p.add_argument("--overlap", action="store_true",
                   help="draw the two subsets independently instead of disjointly")
    p.add_argument("--eval-bins", type=int, default=50)
    p.add_argument("-o", "--output", required=True)
    _add_common(p, with_scores=True)
    p.set_defaults(func=_cmd_property_exp)

    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError, CalibrationError, MetricError, FormatError) as exc:
        print(f"easecp: error: {exc}", file=sys.stderr)
        return 1
    except ToolkitError as exc:
        print(f"easecp: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"easecp: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
