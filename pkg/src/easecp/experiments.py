"""Experiment protocols: the difficulty/set-size property experiment,
metric validation against the property satisfaction rate, hyperparameter
tuning, and repeated algorithm comparisons.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backend
from .binning import compute_ease, t_binning
from .calibrate import (
    DEFAULT_MIN_BIN_COUNT,
    ConformalModel,
    fit_global,
    fit_mondrian,
    predict,
)
from .data import RegressionDataset, ScoreDataset
from .errors import ConfigError, MetricError, ValidationError
from .metrics import (
    deficit_excess,
    escv,
    evaluate_predictions,
    spearman,
    sscv,
    t_ss,
)
from .scores import ScoreSpec, rank_table


def _child_seed(seed: int, *key: int) -> int:
    """Stable 64-bit stream seed derived from (seed, key...)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    )


# ---------------------------------------------------------------------------
# Property satisfaction


@dataclass(frozen=True)
class PropertyConfig:
    """Subset-sampling protocol: r_trials trials of trial_size examples;
    within each trial, n_draws pairs of size-m subsets."""

    r_trials: int = 1000
    trial_size: int = 2000
    subset_size: int = 100
    n_draws: int = 10000
    seed: int = 0
    disjoint: bool = True

    def __post_init__(self):
        if self.subset_size < 1 or self.trial_size < 1 or self.r_trials < 1 or self.n_draws < 1:
            raise ConfigError("all property-experiment sizes must be positive")
        need = 2 * self.subset_size if self.disjoint else self.subset_size
        if self.trial_size < need:
            raise ConfigError(
                f"trial size {self.trial_size} is too small for subset size "
                f"{self.subset_size} (need at least {need})"
            )


def property_satisfaction_rate(difficulty, sizes, m: int, n_draws: int, seed: int,
                               disjoint: bool = True) -> float:
    """Fraction of subset-pair draws where mean difficulty and mean size do
    not strictly oppose each other (ties count as satisfied)."""
    d = np.ascontiguousarray(difficulty, dtype=np.float64)
    s = np.ascontiguousarray(sizes, dtype=np.float64)
    if d.shape != s.shape or d.ndim != 1:
        raise ValidationError("difficulty and sizes must be equal-length vectors")
    need = 2 * m if disjoint else m
    if d.shape[0] < need:
        raise ValidationError(
            f"{d.shape[0]} examples cannot provide "
            f"{'two disjoint subsets' if disjoint else 'a subset'} of size {m}"
        )
    count = backend.property_count(d, s, int(m), int(n_draws), int(seed) & 0xFFFFFFFFFFFFFFFF,
                                   bool(disjoint))
    return count / float(n_draws)


# ---------------------------------------------------------------------------
# Metric validation


@dataclass(frozen=True)
class TrialContext:
    """Everything a per-trial metric can see."""

    ranks: np.ndarray
    sizes: np.ndarray
    covered: np.ndarray
    ease: np.ndarray
    alpha: float
    eval_bins: int
    rate: float
    seed: int


def _default_trial_metrics() -> dict:
    def _tss(ctx: TrialContext) -> float:
        bins = t_binning(ctx.ease, min(ctx.eval_bins, len(ctx.ease)))
        return t_ss(ctx.ranks.astype(np.float64), ctx.sizes, bins.index_sets)

    return {
        "deficit": lambda ctx: deficit_excess(ctx.ranks, ctx.sizes, ctx.covered)[0],
        "excess": lambda ctx: deficit_excess(ctx.ranks, ctx.sizes, ctx.covered)[1],
        "sscv": lambda ctx: sscv(ctx.sizes, ctx.covered, ctx.alpha),
        "escv": lambda ctx: escv(ctx.sizes, ctx.covered, ctx.alpha),
        "t_ss": _tss,
    }


@dataclass(frozen=True)
class MetricValidationReport:
    config: PropertyConfig
    alpha: float
    algorithms: tuple
    correlations: dict  # {algorithm: {metric: {"rho":, "p":}}}
    rankings: dict  # {algorithm: [metric names sorted by |rho| desc]}
    mean_rate: dict  # {algorithm: mean satisfaction rate}

    def to_dict(self) -> dict:
        return {
            "config": {
                "r_trials": self.config.r_trials,
                "trial_size": self.config.trial_size,
                "subset_size": self.config.subset_size,
                "n_draws": self.config.n_draws,
                "seed": self.config.seed,
                "disjoint": self.config.disjoint,
            },
            "alpha": self.alpha,
            "algorithms": list(self.algorithms),
            "correlations": self.correlations,
            "rankings": self.rankings,
            "mean_rate": self.mean_rate,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def metric_validation(ds: ScoreDataset, specs: dict, config: PropertyConfig,
                      alpha: float = 0.1, eval_bins: int = 50,
                      extra_metrics: Optional[dict] = None) -> MetricValidationReport:
    """Correlate per-trial metric values with per-trial property
    satisfaction rates.

    Each algorithm is calibrated once on half the data; every trial then
    samples trial_size examples from the held-out pool, computes each
    metric and the satisfaction rate on that subsample, and the final
    report carries the Spearman correlation per (algorithm, metric) plus a
    by-|rho| ranking.
    """
    n = ds.n_examples
    half = n // 2
    if half < config.trial_size:
        raise ConfigError(
            f"dataset too small: needs a held-out pool of at least {config.trial_size}"
        )
    perm = _rng(config.seed, 0).permutation(n)
    ds_cal = ds.subset(perm[:half])
    ds_pool = ds.subset(perm[half:])
    pool_ranks = rank_table(ds_pool).rank_of(ds_pool.labels)
    pool_ease = compute_ease(ds_pool)

    per_algo = {}
    for name, spec in specs.items():
        model = fit_global(ds_cal, spec, alpha)
        out = predict(model, ds_pool)
        per_algo[name] = (
            np.asarray(out.size, dtype=np.float64),
            np.asarray(out.covered, dtype=bool),
        )

    metric_fns = _default_trial_metrics()
    if extra_metrics:
        metric_fns.update(extra_metrics)
    names = list(metric_fns)

    values = {a: {m: np.empty(config.r_trials) for m in names} for a in specs}
    rates = {a: np.empty(config.r_trials) for a in specs}
    n_pool = ds_pool.n_examples
    for r in range(config.r_trials):
        sel = _rng(config.seed, 1, r).choice(n_pool, size=config.trial_size, replace=False)
        trial_seed = _child_seed(config.seed, 2, r)
        for a in specs:
            sizes, covered = per_algo[a]
            rate = property_satisfaction_rate(
                pool_ranks[sel].astype(np.float64), sizes[sel],
                config.subset_size, config.n_draws, trial_seed, config.disjoint,
            )
            rates[a][r] = rate
            ctx = TrialContext(
                ranks=pool_ranks[sel], sizes=sizes[sel], covered=covered[sel],
                ease=pool_ease[sel], alpha=alpha, eval_bins=eval_bins,
                rate=rate, seed=trial_seed,
            )
            for m in names:
                values[a][m][r] = metric_fns[m](ctx)

    correlations = {}
    rankings = {}
    mean_rate = {}
    for a in specs:
        correlations[a] = {}
        for m in names:
            try:
                rho, p = spearman(values[a][m], rates[a])
            except MetricError:
                # constant metric (or rate) across trials: no correlation to report
                rho, p = None, None
            correlations[a][m] = {"rho": rho, "p": p}
        rankings[a] = sorted(
            names,
            key=lambda m: -1.0
            if correlations[a][m]["rho"] is None
            else abs(correlations[a][m]["rho"]),
            reverse=True,
        )
        mean_rate[a] = float(rates[a].mean())
    return MetricValidationReport(
        config=config, alpha=alpha, algorithms=tuple(specs),
        correlations=correlations, rankings=rankings, mean_rate=mean_rate,
    )


# ---------------------------------------------------------------------------
# Hyperparameter tuning


def _default_saps_w_grid() -> tuple:
    return (0.0, 0.02) + tuple(round(0.05 * i, 2) for i in range(1, 14))


@dataclass(frozen=True)
class TuneGrid:
    """Candidate hyperparameters, iterated in tie-break order (smaller bin
    count first, then smaller weight)."""

    bins: tuple = (10, 20, 30)
    sigma_tags: tuple = ()
    saps_w: tuple = field(default_factory=_default_saps_w_grid)
    raps_lambda: tuple = (0.001, 0.01, 0.1, 0.2, 0.5)

    def __post_init__(self):
        for fname in ("bins", "saps_w", "raps_lambda"):
            if len(getattr(self, fname)) == 0:
                raise ConfigError(f"tuning grid field {fname} must be non-empty")


@dataclass(frozen=True)
class TuneResult:
    family: str
    objective: str
    best_params: dict
    best_value: float
    table: tuple  # ((params, value), ...) in evaluation order


def auto_kreg(ds_tune, alpha: float) -> int:
    """RAPS k_reg: the ceil-style (1 - alpha) quantile of the ground-truth
    ranks on the tuning set."""
    ranks = rank_table(ds_tune).rank_of(ds_tune.labels)
    return max(1, int(np.quantile(ranks, 1.0 - alpha, method="higher")))


TUNABLE_FAMILIES = ("raps", "saps", "olac", "osaps", "ocpa")


def tune(ds_cal, ds_tune, family: str, alpha: float, grid: Optional[TuneGrid] = None,
         objective: Optional[str] = None, eval_bins: int = 50,
         min_bin_count: int = DEFAULT_MIN_BIN_COUNT, seed: int = 0,
         randomized: bool = True, split_binning: bool = False,
         ease_by_tag: Optional[dict] = None) -> TuneResult:
    """Exhaustive grid search: fit on ds_cal, score the objective on ds_tune.

    Objectives: maximize t_ss (default for the binned families) or minimize
    sscv (default for raps/saps, classification only). sigma_tags select
    alternative precomputed ease vectors via ease_by_tag[tag] =
    (ease_cal, ease_tune); the objective is always computed with the tuning
    set's own canonical ease so grid points stay comparable.
    """
    if family not in TUNABLE_FAMILIES:
        raise ConfigError(f"unknown tunable family {family!r}")
    grid = grid or TuneGrid()
    if objective is None:
        objective = "sscv" if family in ("raps", "saps") else "t_ss"
    if objective not in ("t_ss", "sscv"):
        raise ConfigError(f"unknown tuning objective {objective!r}")
    is_reg = isinstance(ds_cal, RegressionDataset)
    if objective == "sscv" and is_reg:
        raise ConfigError("sscv is a classification objective")

    tune_ease = compute_ease(ds_tune)
    tune_bins = t_binning(tune_ease, min(eval_bins, ds_tune.n_examples))
    if is_reg:
        difficulty = np.abs(ds_tune.mu - ds_tune.targets)
    else:
        difficulty = rank_table(ds_tune).rank_of(ds_tune.labels).astype(np.float64)

    tags = tuple(grid.sigma_tags) if grid.sigma_tags else (None,)
    if any(t is not None for t in tags):
        if not ease_by_tag:
            raise ConfigError("sigma_tags given but ease_by_tag is missing")
        missing = [t for t in tags if t is not None and t not in ease_by_tag]
        if missing:
            raise ConfigError(f"no ease vectors for tags {missing}")

    def candidates():
        if family == "raps":
            kreg = auto_kreg(ds_tune, alpha)
            for lam in sorted(grid.raps_lambda):
                yield {"raps_lambda": lam, "raps_kreg": kreg}
        elif family == "saps":
            for w in sorted(grid.saps_w):
                yield {"saps_w": w}
        elif family in ("olac", "ocpa"):
            for b in sorted(grid.bins):
                for tag in tags:
                    yield {"bins": b, "sigma_tag": tag}
        else:  # osaps
            for b in sorted(grid.bins):
                for tag in tags:
                    for w in sorted(grid.saps_w):
                        yield {"bins": b, "sigma_tag": tag, "saps_w": w}

    def run_point(params: dict) -> float:
        kind = {"raps": "raps", "saps": "saps", "olac": "lac", "osaps": "saps",
                "ocpa": "reg_cpa"}[family]
        spec = ScoreSpec(
            kind=kind,
            raps_lambda=params.get("raps_lambda"),
            raps_kreg=params.get("raps_kreg"),
            saps_w=params.get("saps_w"),
            randomized=randomized,
            seed=seed,
        )
        tag = params.get("sigma_tag")
        if family in ("olac", "osaps", "ocpa"):
            cal, tst = ds_cal, ds_tune
            if tag is not None:
                e_cal, e_tune = ease_by_tag[tag]
                cal = _with_only_ease(ds_cal, e_cal)
                tst = _with_only_ease(ds_tune, e_tune)
            model = fit_mondrian(cal, spec, alpha, params["bins"],
                                 split_binning=split_binning, min_bin_count=min_bin_count)
            out = predict(model, tst)
        else:
            model = fit_global(ds_cal, spec, alpha)
            out = predict(model, ds_tune)
        sizes = np.asarray(out.size, dtype=np.float64)
        if objective == "t_ss":
            return t_ss(difficulty, sizes, tune_bins.index_sets)
        return sscv(out.size, out.covered, alpha)

    best_params = None
    best_value = None
    table = []
    better = (lambda v, b: v > b) if objective == "t_ss" else (lambda v, b: v < b)
    for params in candidates():
        value = run_point(params)
        table.append((dict(params), value))
        if best_value is None or better(value, best_value):
            best_params, best_value = dict(params), value
    return TuneResult(family=family, objective=objective, best_params=best_params,
                      best_value=best_value, table=tuple(table))


def _with_only_ease(ds, ease: np.ndarray):
    """Copy of ds carrying the given ease and no transformed block."""
    if isinstance(ds, RegressionDataset):
        return RegressionDataset(mu=ds.mu, sigma=ds.sigma, targets=ds.targets, ease=ease)
    return ScoreDataset(probs=ds.probs, labels=ds.labels, ease=ease)


# ---------------------------------------------------------------------------
# Algorithm comparison runs


CLASSIFICATION_ALGOS = ("lac", "aps", "raps", "saps", "olac", "osaps")
REGRESSION_ALGOS = ("cp", "cpa", "ocpa")
TUNED_ALGOS = ("raps", "saps", "olac", "osaps", "ocpa")


@dataclass(frozen=True)
class CompareConfig:
    algorithms: tuple
    alphas: tuple
    repeats: int = 10
    seed: int = 0
    n_val: Optional[int] = None
    n_test: Optional[int] = None
    eval_bins: int = 50
    fit_bins: int = 10
    raps_lambda: float = 0.01
    saps_w: float = 0.1
    randomized: bool = True
    split_binning: bool = False
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT
    tune_enabled: bool = False
    tune_grid: Optional[TuneGrid] = None

    def to_dict(self) -> dict:
        d = {
            "algorithms": list(self.algorithms),
            "alphas": list(self.alphas),
            "repeats": self.repeats,
            "seed": self.seed,
            "n_val": self.n_val,
            "n_test": self.n_test,
            "eval_bins": self.eval_bins,
            "fit_bins": self.fit_bins,
            "raps_lambda": self.raps_lambda,
            "saps_w": self.saps_w,
            "randomized": self.randomized,
            "split_binning": self.split_binning,
            "min_bin_count": self.min_bin_count,
            "tune_enabled": self.tune_enabled,
        }
        if self.tune_grid is not None:
            d["tune_grid"] = {
                "bins": list(self.tune_grid.bins),
                "sigma_tags": list(self.tune_grid.sigma_tags),
                "saps_w": list(self.tune_grid.saps_w),
                "raps_lambda": list(self.tune_grid.raps_lambda),
            }
        return d


_MEDIAN_FIELDS = ("coverage", "avg_size", "t_cv", "t_ss", "sscv", "escv",
                  "deficit", "excess", "width_error_kendall")


@dataclass(frozen=True)
class CompareReport:
    config: CompareConfig
    rows: tuple  # ({algorithm, alpha, medians...}, ...)

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "rows": [dict(r) for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        header = "algorithm,alpha," + ",".join(_MEDIAN_FIELDS)
        lines = [header]
        for r in self.rows:
            vals = [r["algorithm"], repr(r["alpha"])]
            vals += ["" if r[f] is None else repr(r[f]) for f in _MEDIAN_FIELDS]
            lines.append(",".join(vals))
        return "\n".join(lines) + "\n"

    def to_tables_csv(self) -> str:
        """Wide layout: one row per (alpha, metric), one column per algorithm."""
        algos = list(self.config.algorithms)
        by_key = {(r["algorithm"], r["alpha"]): r for r in self.rows}
        lines = ["alpha,metric," + ",".join(algos)]
        for alpha in self.config.alphas:
            for metric in ("t_cv", "t_ss", "coverage", "avg_size"):
                vals = [repr(by_key[(a, alpha)][metric]) for a in algos]
                lines.append(f"{alpha!r},{metric}," + ",".join(vals))
        return "\n".join(lines) + "\n"

    def median(self, algorithm: str, alpha: float, metric: str):
        for r in self.rows:
            if r["algorithm"] == algorithm and r["alpha"] == alpha:
                return r[metric]
        raise KeyError((algorithm, alpha, metric))


def _fit_one(ds_val, ds_cal, ds_tune, algorithm: str, alpha: float,
             cfg: CompareConfig, spec_seed: int) -> ConformalModel:
    randomized = cfg.randomized
    if algorithm in ("lac", "aps"):
        return fit_global(ds_val, ScoreSpec(algorithm, randomized=randomized, seed=spec_seed), alpha)
    if algorithm == "cp":
        return fit_global(ds_val, ScoreSpec("reg_cp", seed=spec_seed), alpha)
    if algorithm == "cpa":
        return fit_global(ds_val, ScoreSpec("reg_cpa", seed=spec_seed), alpha)
    if cfg.tune_enabled:
        result = tune(ds_cal, ds_tune, algorithm, alpha, cfg.tune_grid,
                      eval_bins=cfg.eval_bins, min_bin_count=cfg.min_bin_count,
                      seed=spec_seed, randomized=randomized,
                      split_binning=cfg.split_binning)
        p = result.best_params
        fit_ds = ds_cal
    else:
        p = {
            "raps": {"raps_lambda": cfg.raps_lambda, "raps_kreg": auto_kreg(ds_val, alpha)},
            "saps": {"saps_w": cfg.saps_w},
            "olac": {"bins": cfg.fit_bins},
            "osaps": {"bins": cfg.fit_bins, "saps_w": cfg.saps_w},
            "ocpa": {"bins": cfg.fit_bins},
        }[algorithm]
        fit_ds = ds_val
    kind = {"raps": "raps", "saps": "saps", "olac": "lac", "osaps": "saps",
            "ocpa": "reg_cpa"}[algorithm]
    spec = ScoreSpec(kind=kind, raps_lambda=p.get("raps_lambda"),
                     raps_kreg=p.get("raps_kreg"), saps_w=p.get("saps_w"),
                     randomized=randomized, seed=spec_seed)
    if algorithm in ("olac", "osaps", "ocpa"):
        return fit_mondrian(fit_ds, spec, alpha, p["bins"],
                            split_binning=cfg.split_binning, min_bin_count=cfg.min_bin_count)
    return fit_global(fit_ds, spec, alpha)


def compare_run(ds, cfg: CompareConfig, threads: int = 1) -> CompareReport:
    """The repeated-split comparison protocol.

    Per repeat: a fresh disjoint validation/test split; algorithms needing
    hyperparameters use the calibration/tuning halves of the validation set
    when tuning is enabled, everything else calibrates on the whole
    validation set; metrics are computed on the test set and medians are
    reported across repeats. Repeats own independent seed streams, so the
    report does not depend on the thread count.
    """
    is_reg = isinstance(ds, RegressionDataset)
    valid = REGRESSION_ALGOS if is_reg else CLASSIFICATION_ALGOS
    for a in cfg.algorithms:
        if a not in valid:
            raise ConfigError(f"algorithm {a!r} is not valid for this dataset kind")
    n = ds.n_examples
    n_val = cfg.n_val if cfg.n_val is not None else n // 2
    n_test = cfg.n_test if cfg.n_test is not None else n - n // 2
    if n_val < 2 or n_test < 1 or n_val + n_test > n:
        raise ConfigError(
            f"cannot draw n_val={n_val} plus n_test={n_test} from {n} examples"
        )

    def run_repeat(r: int) -> dict:
        perm = _rng(cfg.seed, r).permutation(n)
        ds_val = ds.subset(perm[:n_val])
        ds_test = ds.subset(perm[n_val : n_val + n_test])
        half = n_val // 2
        ds_cal = ds_val.subset(np.arange(half))
        ds_tune = ds_val.subset(np.arange(half, n_val))
        spec_seed = _child_seed(cfg.seed, r, 7)
        result = {}
        for alpha in cfg.alphas:
            for a in cfg.algorithms:
                model = _fit_one(ds_val, ds_cal, ds_tune, a, alpha, cfg, spec_seed)
                out = predict(model, ds_test)
                rep = evaluate_predictions(ds_test, out, alpha, eval_bins=cfg.eval_bins)
                result[(a, alpha)] = {f: getattr(rep, f) for f in _MEDIAN_FIELDS}
        return result

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_repeat = list(pool.map(run_repeat, range(cfg.repeats)))
    else:
        per_repeat = [run_repeat(r) for r in range(cfg.repeats)]

    collected = {(a, al): {f: [] for f in _MEDIAN_FIELDS} for a in cfg.algorithms
                 for al in cfg.alphas}
    for result in per_repeat:
        for key, fields in result.items():
            for f in _MEDIAN_FIELDS:
                collected[key][f].append(fields[f])

    rows = []
    for a in cfg.algorithms:
        for alpha in cfg.alphas:
            row = {"algorithm": a, "alpha": alpha}
            for f in _MEDIAN_FIELDS:
                vals = collected[(a, alpha)][f]
                row[f] = None if vals[0] is None else float(np.median(np.asarray(vals, dtype=np.float64)))
            rows.append(row)
    return CompareReport(config=cfg, rows=tuple(rows))
