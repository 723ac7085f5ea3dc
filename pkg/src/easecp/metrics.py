"""Evaluation metrics.

Binned adaptivity metrics (computed over ease bins of the evaluated set):

    t_cv   worst |per-bin coverage - (1 - alpha)|
    t_ss   signed R^2 between per-bin mean difficulty (ground-truth rank,
           or absolute error for regression) and per-bin mean set size
           (interval width for regression)

Existing metrics for comparison: SSCV (coverage deviation over set-size
strata), ESCV (over exact sizes), Deficit / Excess (classes missing to
reach the true label / removable while keeping it, in softmax order; the
closed forms assume rank-prefix sets and are applied uniformly for
comparability), plus Spearman and Kendall tau-b rank correlations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as _sps

from .errors import MetricError, ValidationError

# Set-size strata (inclusive ranges); size-0 sets share the first stratum.
DEFAULT_SSCV_STRATA = ((0, 1), (2, 3), (4, 10), (11, 100), (101, None))


def signed_r2(x, y) -> float:
    """Coefficient of determination of the OLS fit y ~ a*x + c, signed by a.

    Degenerate inputs (constant x or constant y) give 0: no measurable
    relationship.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise MetricError("signed_r2 needs two vectors of equal length")
    if x.shape[0] < 2:
        raise MetricError("signed_r2 needs at least 2 points")
    xm = x - x.mean()
    ym = y - y.mean()
    sxx = float(xm @ xm)
    syy = float(ym @ ym)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    a = float(xm @ ym) / sxx
    resid = ym - a * xm
    r2 = 1.0 - float(resid @ resid) / syy
    return float(np.sign(a)) * max(0.0, r2)


def coverage(covered) -> float:
    c = np.asarray(covered, dtype=bool)
    if c.size == 0:
        raise MetricError("coverage of an empty output is undefined")
    return float(c.mean())


def t_cv(covered, index_sets: Sequence, alpha: float) -> float:
    """Worst per-bin coverage deviation from the target 1 - alpha."""
    c = np.asarray(covered, dtype=bool)
    worst = 0.0
    for b, idx in enumerate(index_sets):
        idx = np.asarray(idx)
        if idx.size == 0:
            raise MetricError(f"bin {b} is empty; coverage there is undefined")
        worst = max(worst, abs(float(c[idx].mean()) - (1.0 - alpha)))
    return worst


def t_ss(difficulty, size, index_sets: Sequence) -> float:
    """Signed R^2 between per-bin mean difficulty and per-bin mean size."""
    if len(index_sets) < 2:
        raise MetricError("t_ss needs at least 2 bins")
    d = np.asarray(difficulty, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64)
    mean_d = []
    mean_s = []
    for b, idx in enumerate(index_sets):
        idx = np.asarray(idx)
        if idx.size == 0:
            raise MetricError(f"bin {b} is empty; its averages are undefined")
        mean_d.append(float(d[idx].mean()))
        mean_s.append(float(s[idx].mean()))
    return signed_r2(mean_d, mean_s)


def sscv(size, covered, alpha: float, strata=DEFAULT_SSCV_STRATA) -> float:
    """Worst coverage deviation across set-size strata (non-empty ones)."""
    s = np.asarray(size)
    c = np.asarray(covered, dtype=bool)
    worst = None
    for lo, hi in strata:
        mask = s >= lo if hi is None else (s >= lo) & (s <= hi)
        if not np.any(mask):
            continue
        dev = abs(float(c[mask].mean()) - (1.0 - alpha))
        worst = dev if worst is None else max(worst, dev)
    if worst is None:
        raise MetricError("all size strata are empty")
    return worst


def escv(size, covered, alpha: float, min_count: int = 1) -> float:
    """Worst coverage deviation across exact set sizes with enough mass."""
    s = np.asarray(size)
    c = np.asarray(covered, dtype=bool)
    worst = None
    for val in np.unique(s):
        mask = s == val
        if int(mask.sum()) < min_count:
            continue
        dev = abs(float(c[mask].mean()) - (1.0 - alpha))
        worst = dev if worst is None else max(worst, dev)
    if worst is None:
        raise MetricError(f"no size group reaches min_count={min_count}")
    return worst


def deficit_excess(rank_of_true, size, covered) -> tuple:
    """Mean Deficit and mean Excess.

    Deficit = max(0, rank - |C|); Excess = max(0, |C| - rank) when the true
    label is covered, else 0. Exact for rank-prefix sets, applied to all.
    """
    r = np.asarray(rank_of_true, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64)
    c = np.asarray(covered, dtype=bool)
    deficit = np.maximum(0.0, r - s)
    excess = np.where(c, np.maximum(0.0, s - r), 0.0)
    return float(deficit.mean()), float(excess.mean())


def _avg_rank(v: np.ndarray) -> np.ndarray:
    return _sps.rankdata(v, method="average")


def spearman(x, y) -> tuple:
    """Spearman rho (Pearson on average ranks) and its two-sided p-value
    from the t approximation t = rho * sqrt((n-2)/(1-rho^2))."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape or x.shape[0] < 3:
        raise MetricError("spearman needs two equal-length vectors, n >= 3")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetricError("spearman is undefined for a constant input")
    rx = _avg_rank(x)
    ry = _avg_rank(y)
    rxm = rx - rx.mean()
    rym = ry - ry.mean()
    rho = float(rxm @ rym) / float(np.sqrt((rxm @ rxm) * (rym @ rym)))
    rho = min(1.0, max(-1.0, rho))
    n = x.shape[0]
    if abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(2.0 * _sps.t.sf(abs(t), df=n - 2))
    return rho, p


def kendall_tau(x, y) -> float:
    """Kendall tau-b (with tie correction)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape or x.shape[0] < 2:
        raise MetricError("kendall_tau needs two equal-length vectors, n >= 2")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise MetricError("kendall_tau is undefined for a constant input")
    tau = _sps.kendalltau(x, y, variant="b").statistic
    return float(tau)


@dataclass(frozen=True)
class BinStats:
    """Per-bin summary used by the binned metrics."""

    count: int
    coverage: float
    mean_difficulty: float  # mean ground-truth rank, or mean |mu - y|
    mean_size: float  # mean set size, or mean interval width

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "coverage": self.coverage,
            "mean_difficulty": self.mean_difficulty,
            "mean_size": self.mean_size,
        }


@dataclass(frozen=True)
class MetricReport:
    """Full evaluation of one prediction run."""

    task: str
    alpha: float
    n_examples: int
    eval_bins: int
    coverage: float
    avg_size: float
    t_cv: float
    t_ss: float
    sscv: Optional[float] = None
    escv: Optional[float] = None
    deficit: Optional[float] = None
    excess: Optional[float] = None
    width_error_kendall: Optional[float] = None
    per_bin: tuple = field(default=())

    CSV_FIELDS = (
        "task", "alpha", "n_examples", "eval_bins", "coverage", "avg_size",
        "t_cv", "t_ss", "sscv", "escv", "deficit", "excess", "width_error_kendall",
    )

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.CSV_FIELDS}
        d["per_bin"] = [b.to_dict() for b in self.per_bin]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def csv_row(self) -> str:
        vals = []
        for k in self.CSV_FIELDS:
            v = getattr(self, k)
            vals.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
        return ",".join(vals)

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(cls.CSV_FIELDS)


def evaluate_predictions(ds, output, alpha: float, eval_bins: int = 50,
                         strata=DEFAULT_SSCV_STRATA, escv_min_count: int = 1) -> MetricReport:
    """Bin the evaluated set by ease and compute the full metric battery."""
    from .binning import compute_ease, t_binning  # local import avoids a cycle
    from .scores import rank_table

    n = ds.n_examples
    if output.n_examples != n:
        raise ValidationError("prediction output does not match the dataset size")
    ease = compute_ease(ds)
    bins = t_binning(ease, eval_bins)
    sets = bins.index_sets
    cov = coverage(output.covered)
    if output.kind == "classification":
        ranks = rank_table(ds).rank_of(ds.labels)
        difficulty = ranks.astype(np.float64)
    else:
        difficulty = np.abs(ds.mu - ds.targets)
    size = np.asarray(output.size, dtype=np.float64)
    per_bin = tuple(
        BinStats(
            count=int(len(idx)),
            coverage=float(np.asarray(output.covered)[idx].mean()),
            mean_difficulty=float(difficulty[idx].mean()),
            mean_size=float(size[idx].mean()),
        )
        for idx in sets
    )
    common = dict(
        task=output.kind, alpha=alpha, n_examples=n, eval_bins=eval_bins,
        coverage=cov, avg_size=float(size.mean()),
        t_cv=t_cv(output.covered, sets, alpha),
        t_ss=t_ss(difficulty, size, sets),
        per_bin=per_bin,
    )
    if output.kind == "classification":
        dfc, exc = deficit_excess(ranks, output.size, output.covered)
        return MetricReport(
            sscv=sscv(output.size, output.covered, alpha, strata),
            escv=escv(output.size, output.covered, alpha, escv_min_count),
            deficit=dfc, excess=exc, **common,
        )
    mean_d = [b.mean_difficulty for b in per_bin]
    mean_s = [b.mean_size for b in per_bin]
    try:
        tau = kendall_tau(mean_d, mean_s)
    except MetricError:
        tau = 0.0
    return MetricReport(width_error_kendall=tau, **common)
