"""Split-conformal calibration, Mondrian group-conditional calibration over
difficulty bins, and prediction.

The threshold is the ceil((n+1)(1-alpha))-th smallest calibration score
(+inf when that index exceeds n), which carries the finite-sample coverage
guarantee. Mondrian mode fits one threshold per ease bin; at test time an
example is assigned to the bin whose edge interval contains its ease and
gets that bin's threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from . import __version__
from .binning import BinModel, compute_ease, t_binning
from .data import PredictionOutput, RegressionDataset, ScoreDataset
from .errors import CalibrationError, ConfigError, FormatError, ValidationError
from .scores import (
    ScoreSpec,
    rank_table,
    regression_score,
    score_matrix,
    true_label_scores,
    uniform_matrix,
    uniform_true,
)

DEFAULT_MIN_BIN_COUNT = 20


def conformal_index(n: int, alpha: float) -> int:
    """1-based order-statistic index ceil((n+1)(1-alpha)), computed in exact
    rational arithmetic so float rounding can never shift it."""
    if not (0.0 < alpha < 1.0):
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    q = (n + 1) * (1 - Fraction(alpha))
    return math.ceil(q)


def conformal_quantile(scores, alpha: float) -> float:
    """Finite-sample-valid conformal threshold; +inf when n is too small."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    n = s.shape[0]
    if n == 0:
        raise CalibrationError("cannot take a conformal quantile of zero scores")
    k = conformal_index(n, alpha)
    if k > n:
        return math.inf
    return float(np.partition(s, k - 1)[k - 1])


@dataclass(frozen=True)
class ConformalModel:
    """A fitted conformal predictor: score spec, target miscoverage, and one
    global threshold or per-bin Mondrian thresholds."""

    spec: ScoreSpec
    alpha: float
    mode: str  # "global" | "mondrian"
    thresholds: np.ndarray
    bin_lower_edges: Optional[np.ndarray] = None
    task: str = "classification"

    def __post_init__(self):
        if self.mode not in ("global", "mondrian"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "mondrian" and self.bin_lower_edges is None:
            raise ConfigError("mondrian model requires bin edges")
        if self.mode == "mondrian" and len(self.thresholds) != len(self.bin_lower_edges):
            raise ConfigError("mondrian thresholds and bin edges disagree in length")
        if self.mode == "global" and len(self.thresholds) != 1:
            raise ConfigError("global model carries exactly one threshold")

    @property
    def n_bins(self) -> int:
        return len(self.thresholds)

    def to_json(self) -> str:
        def enc(v: float):
            return None if math.isinf(v) else float(v)

        doc = {
            "format": "easecp-model",
            "version": __version__,
            "task": self.task,
            "score": self.spec.to_dict(),
            "alpha": self.alpha,
            "mode": self.mode,
            "thresholds": [enc(t) for t in self.thresholds.tolist()],
            "bin_edges": None
            if self.bin_lower_edges is None
            else [float(e) for e in self.bin_lower_edges.tolist()],
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConformalModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"model file is not valid JSON: {exc}") from None
        if not isinstance(doc, dict) or doc.get("format") != "easecp-model":
            raise FormatError("not an easecp model file")
        thr = np.array(
            [math.inf if t is None else float(t) for t in doc["thresholds"]], dtype=np.float64
        )
        edges = doc.get("bin_edges")
        return cls(
            spec=ScoreSpec.from_dict(doc["score"]),
            alpha=float(doc["alpha"]),
            mode=doc["mode"],
            thresholds=thr,
            bin_lower_edges=None if edges is None else np.asarray(edges, dtype=np.float64),
            task=doc.get("task", "classification"),
        )


def save_model(model: ConformalModel, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(model.to_json())


def load_model(path: str) -> ConformalModel:
    with open(path, "r", encoding="ascii") as fh:
        return ConformalModel.from_json(fh.read())


def _calibration_scores(ds, spec: ScoreSpec) -> np.ndarray:
    if isinstance(ds, RegressionDataset):
        if not spec.is_regression:
            raise ConfigError(f"score {spec.kind!r} cannot calibrate a regression dataset")
        return regression_score(spec, ds.mu, ds.sigma, ds.targets)
    if spec.is_regression:
        raise ConfigError(f"score {spec.kind!r} cannot calibrate a classification dataset")
    table = rank_table(ds)
    u_true = uniform_true(spec, ds.labels)
    return true_label_scores(spec, ds.probs, table, ds.labels, u_true)


def fit_global(ds, spec: ScoreSpec, alpha: float) -> ConformalModel:
    """Plain split conformal prediction: one threshold for everyone."""
    scores = _calibration_scores(ds, spec)
    thr = conformal_quantile(scores, alpha)
    task = "regression" if isinstance(ds, RegressionDataset) else "classification"
    return ConformalModel(
        spec=spec, alpha=alpha, mode="global",
        thresholds=np.array([thr], dtype=np.float64), task=task,
    )


def fit_mondrian(
    ds,
    spec: ScoreSpec,
    alpha: float,
    bins: Union[int, BinModel],
    split_binning: bool = False,
    min_bin_count: int = DEFAULT_MIN_BIN_COUNT,
) -> ConformalModel:
    """Group-conditional calibration over ease bins.

    bins may be a bin count (the partition is fitted here) or a prefitted
    BinModel (calibration examples are then assigned through its edges).
    With split_binning the first half of the calibration set fits the bin
    edges and only the second half feeds the thresholds, which is what the
    per-bin coverage guarantee wants; a single shared set still gives
    marginal coverage.
    """
    n = ds.n_examples
    ease = compute_ease(ds)
    if split_binning:
        if not isinstance(bins, int):
            raise ConfigError("split_binning refits the bin model, pass an integer bin count")
        half = n // 2
        if half < 1 or n - half < 1:
            raise CalibrationError(f"cannot split {n} calibration examples for binning")
        bin_model = t_binning(ease[:half], bins)
        score_idx = np.arange(half, n)
    else:
        bin_model = t_binning(ease, bins) if isinstance(bins, int) else bins
        score_idx = np.arange(n)

    scores = _calibration_scores(ds, spec)
    if split_binning or not isinstance(bins, int):
        assignment = bin_model.assign(ease[score_idx])
        groups = [score_idx[assignment == b] for b in range(bin_model.n_bins)]
    else:
        groups = [np.asarray(g) for g in bin_model.index_sets]

    min_required = max(1, int(min_bin_count))
    thresholds = np.empty(bin_model.n_bins, dtype=np.float64)
    for b, grp in enumerate(groups):
        if len(grp) < min_required:
            raise CalibrationError(
                f"bin {b} has {len(grp)} calibration examples "
                f"(minimum {min_required}); reduce the bin count"
            )
        thresholds[b] = conformal_quantile(scores[grp], alpha)

    task = "regression" if isinstance(ds, RegressionDataset) else "classification"
    return ConformalModel(
        spec=spec, alpha=alpha, mode="mondrian", thresholds=thresholds,
        bin_lower_edges=bin_model.lower_edges.copy(), task=task,
    )


def _per_example_thresholds(model: ConformalModel, ds) -> tuple:
    """Threshold per test example, plus the bin assignment (None for global)."""
    n = ds.n_examples
    if model.mode == "global":
        return np.full(n, model.thresholds[0]), None
    ease = compute_ease(ds)
    edge_model = BinModel(
        n_bins=model.n_bins, index_sets=(), lower_edges=model.bin_lower_edges
    )
    assignment = edge_model.assign(ease)
    return model.thresholds[assignment], assignment


def predict(model: ConformalModel, ds) -> PredictionOutput:
    """Prediction sets (or intervals) for every example in ds."""
    is_reg = isinstance(ds, RegressionDataset)
    if is_reg != (model.task == "regression"):
        raise ConfigError(f"model task {model.task!r} does not match the dataset")
    q, assignment = _per_example_thresholds(model, ds)
    if is_reg:
        if model.spec.kind == "reg_cp":
            lo, hi = ds.mu - q, ds.mu + q
        elif model.spec.kind == "reg_cpa":
            lo, hi = ds.mu - q * ds.sigma, ds.mu + q * ds.sigma
        else:
            raise ConfigError(f"{model.spec.kind!r} is not a regression score")
        covered = (lo <= ds.targets) & (ds.targets <= hi)
        return PredictionOutput(
            kind="regression", covered=covered, size=hi - lo,
            lo=lo, hi=hi, bin_index=assignment,
        )
    table = rank_table(ds)
    u = uniform_matrix(model.spec, ds.n_examples, ds.n_classes)
    smat = score_matrix(model.spec, ds.probs, table, u)
    member = smat <= q[:, None]
    covered = member[np.arange(ds.n_examples), ds.labels]
    return PredictionOutput(
        kind="classification", covered=covered,
        size=member.sum(axis=1).astype(np.int64),
        member=member, bin_index=assignment,
    )
