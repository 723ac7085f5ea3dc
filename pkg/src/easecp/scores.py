"""Non-conformity score functions and set/interval construction.

Classification scores (lower = more conforming):

    lac   1 - p_j
    aps   sum of probabilities ranked above j, plus u * p_j
    raps  aps + raps_lambda * max(0, rank(j) - raps_kreg)
    saps  u * p_max at rank 1, else p_max + saps_w * (rank(j) - 2 + u)

Regression scores: reg_cp |mu - y| and reg_cpa |mu - y| / sigma.

Ties in the softmax are always broken toward the smaller class index; the
rank table is the single source of ordering. Randomized scores draw one
uniform per (example, class), keyed by (seed, example index, class index),
so results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backend
from .data import ScoreDataset
from .errors import ConfigError, ValidationError

CLASSIFICATION_KINDS = ("lac", "aps", "raps", "saps")
REGRESSION_KINDS = ("reg_cp", "reg_cpa")

_KIND_IDS = {
    "lac": backend.KIND_LAC,
    "aps": backend.KIND_APS,
    "raps": backend.KIND_RAPS,
    "saps": backend.KIND_SAPS,
}


@dataclass(frozen=True)
class ScoreSpec:
    """A score function plus the hyperparameters it needs."""

    kind: str
    raps_lambda: Optional[float] = None
    raps_kreg: Optional[int] = None
    saps_w: Optional[float] = None
    randomized: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CLASSIFICATION_KINDS + REGRESSION_KINDS:
            raise ConfigError(f"unknown score kind {self.kind!r}")
        if self.kind == "raps":
            if self.raps_lambda is None or self.raps_kreg is None:
                raise ConfigError("raps requires raps_lambda and raps_kreg")
            if self.raps_lambda < 0:
                raise ConfigError("raps_lambda must be >= 0")
            if self.raps_kreg < 1:
                raise ConfigError("raps_kreg must be >= 1")
        if self.kind == "saps":
            if self.saps_w is None:
                raise ConfigError("saps requires saps_w")
            if self.saps_w < 0:
                raise ConfigError("saps_w must be >= 0")

    @property
    def is_regression(self) -> bool:
        return self.kind in REGRESSION_KINDS

    def with_seed(self, seed: int) -> "ScoreSpec":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "raps_lambda": self.raps_lambda,
            "raps_kreg": self.raps_kreg,
            "saps_w": self.saps_w,
            "randomized": self.randomized,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreSpec":
        return cls(
            kind=d["kind"],
            raps_lambda=d.get("raps_lambda"),
            raps_kreg=d.get("raps_kreg"),
            saps_w=d.get("saps_w"),
            randomized=bool(d.get("randomized", True)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class RankTable:
    """Descending-probability ordering per example.

    order[i, t] is the class at (1-based) rank t+1; rank[i, j] is the
    1-based rank of class j. Equal probabilities are ordered by ascending
    class index.
    """

    order: np.ndarray  # (n, k) int32
    rank: np.ndarray  # (n, k) int32

    @property
    def n_examples(self) -> int:
        return self.order.shape[0]

    def rank_of(self, labels: np.ndarray) -> np.ndarray:
        """1-based rank of the given label per example."""
        return self.rank[np.arange(self.order.shape[0]), labels].astype(np.int64)


def rank_table(probs_or_ds) -> RankTable:
    """Sort classes by descending probability (ties toward lower index)."""
    probs = probs_or_ds.probs if isinstance(probs_or_ds, ScoreDataset) else np.asarray(probs_or_ds)
    if probs.ndim != 2:
        raise ValidationError("rank_table expects an (n, k) probability matrix")
    order = np.argsort(-probs, axis=1, kind="stable").astype(np.int32)
    rank = np.empty_like(order)
    n, k = probs.shape
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(1, k + 1, dtype=np.int32), (n, k)), axis=1)
    return RankTable(order=order, rank=rank)


def _params(spec: ScoreSpec):
    return dict(
        lam=spec.raps_lambda or 0.0,
        kreg=spec.raps_kreg or 1,
        w=spec.saps_w or 0.0,
    )


def uniform_matrix(spec: ScoreSpec, n: int, k: int) -> np.ndarray:
    """Per-(example, class) uniforms; all ones in deterministic mode."""
    if not spec.randomized:
        return np.ones((n, k), dtype=np.float64)
    return backend.keyed_uniform_matrix(spec.seed, n, k)


def uniform_true(spec: ScoreSpec, labels: np.ndarray) -> np.ndarray:
    if not spec.randomized:
        return np.ones(labels.shape[0], dtype=np.float64)
    return backend.keyed_uniform_true(spec.seed, labels)


def score_matrix(spec: ScoreSpec, probs: np.ndarray, table: RankTable, u: np.ndarray) -> np.ndarray:
    """Scores for every (example, class) pair."""
    if spec.is_regression:
        raise ConfigError(f"{spec.kind} is a regression score")
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    return backend.score_matrix(_KIND_IDS[spec.kind], probs, table.order, table.rank, u, **_params(spec))


def true_label_scores(spec: ScoreSpec, probs: np.ndarray, table: RankTable,
                      labels: np.ndarray, u_true: np.ndarray) -> np.ndarray:
    """Score of the true label per example."""
    if spec.is_regression:
        raise ConfigError(f"{spec.kind} is a regression score")
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    u_true = np.ascontiguousarray(u_true, dtype=np.float64)
    return backend.true_scores(_KIND_IDS[spec.kind], probs, table.order, table.rank,
                               labels, u_true, **_params(spec))


def score(spec: ScoreSpec, probs_row, j: int, u: float = 1.0) -> float:
    """Reference scalar form: score of class j for one probability row.

    u is ignored (treated as 1) when the spec is not randomized.
    """
    row = np.asarray(probs_row, dtype=np.float64).reshape(1, -1)
    table = rank_table(row)
    u_eff = float(u) if spec.randomized else 1.0
    u_true = np.array([u_eff], dtype=np.float64)
    return float(true_label_scores(spec, row, table, np.array([j], dtype=np.int64), u_true)[0])


def prediction_set(spec: ScoreSpec, probs_row, q: float, u_row=None) -> np.ndarray:
    """Sorted class indices whose score is <= q (one example)."""
    row = np.asarray(probs_row, dtype=np.float64).reshape(1, -1)
    table = rank_table(row)
    if u_row is None:
        u = uniform_matrix(spec, 1, row.shape[1])
    else:
        u = np.asarray(u_row, dtype=np.float64).reshape(1, -1)
        if not spec.randomized:
            u = np.ones_like(u)
    s = score_matrix(spec, row, table, u)
    return np.flatnonzero(s[0] <= q)


def regression_score(spec: ScoreSpec, mu, sigma, y):
    """reg_cp: |mu - y|; reg_cpa: |mu - y| / sigma."""
    mu = np.asarray(mu, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if spec.kind == "reg_cp":
        return np.abs(mu - y)
    if spec.kind == "reg_cpa":
        sigma = np.asarray(sigma, dtype=np.float64)
        if np.any(sigma <= 0):
            raise ValidationError("reg_cpa requires positive sigma")
        return np.abs(mu - y) / sigma
    raise ConfigError(f"{spec.kind} is not a regression score")


def regression_interval(spec: ScoreSpec, mu, sigma, q: float):
    """Interval [lo, hi] implied by threshold q."""
    mu = np.asarray(mu, dtype=np.float64)
    if spec.kind == "reg_cp":
        return mu - q, mu + q
    if spec.kind == "reg_cpa":
        sigma = np.asarray(sigma, dtype=np.float64)
        if np.any(sigma <= 0):
            raise ValidationError("reg_cpa requires positive sigma")
        return mu - q * sigma, mu + q * sigma
    raise ConfigError(f"{spec.kind} is not a regression score")
