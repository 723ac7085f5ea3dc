"""Dataset containers and validation.

Arrays are stored float64 internally but are quantized through float32 at
construction, matching the binary file format: a dataset written to disk
and loaded back is bit-identical. Datasets are immutable after
construction (array buffers are marked read-only) and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError

ROW_SUM_TOL = 1e-4
EASE_CONSISTENCY_TOL = 1e-6


def quantize_f32(arr: np.ndarray) -> np.ndarray:
    """Round-trip an array through float32 (the on-disk precision)."""
    return np.asarray(arr, dtype=np.float64).astype(np.float32).astype(np.float64)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _check_prob_rows(probs: np.ndarray, what: str, rows_per_example: int = 1) -> None:
    flat = probs.reshape(-1, probs.shape[-1])
    out_of_range = np.any((flat < 0.0) | (flat > 1.0), axis=1)
    if np.any(out_of_range):
        bad = int(np.argmax(out_of_range)) // rows_per_example
        raise ValidationError(f"{what} row {bad} has entries outside [0, 1]")
    sums = flat.sum(axis=1)
    off = np.abs(sums - 1.0) > ROW_SUM_TOL
    if np.any(off):
        flat_bad = int(np.argmax(off))
        raise ValidationError(
            f"{what} row {flat_bad // rows_per_example} sums to {sums[flat_bad]:.6f}, "
            f"expected 1 within {ROW_SUM_TOL}"
        )


def cosine_ease(probs: np.ndarray, transformed: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Mean cosine similarity between each row and its transformed rows.

    probs: (n, k); transformed: (n, l, k). Result clamped to [0, 1].
    """
    n = probs.shape[0]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk):
        p = probs[start : start + chunk]
        t = transformed[start : start + chunk]
        sp = np.sum(p * p, axis=1)
        st = np.sum(t * t, axis=2)
        if np.any(sp == 0.0):
            bad = start + int(np.argmax(sp == 0.0))
            raise ValidationError(f"probability row {bad} has zero norm")
        if np.any(st == 0.0):
            bad = start + int(np.argmax(np.any(st == 0.0, axis=1)))
            raise ValidationError(f"transformed probability row {bad} has zero norm")
        dots = np.sum(p[:, None, :] * t, axis=2)
        cos = dots / np.sqrt(sp[:, None] * st)
        out[start : start + chunk] = cos.mean(axis=1)
    return np.clip(out, 0.0, 1.0)


def regression_ease(mu: np.ndarray, transformed_mu: np.ndarray) -> np.ndarray:
    """Mean exp(-|mu - transformed mu|) per example; always in (0, 1]."""
    return np.exp(-np.abs(mu[:, None] - transformed_mu)).mean(axis=1)


@dataclass(frozen=True)
class ScoreDataset:
    """Classifier outputs: softmax rows, labels, and optionally the
    predictions on transformed inputs and/or the derived per-example ease."""

    probs: np.ndarray
    labels: np.ndarray
    transformed_probs: Optional[np.ndarray] = None
    ease: Optional[np.ndarray] = None

    def __post_init__(self):
        probs = quantize_f32(self.probs)
        labels = np.asarray(self.labels, dtype=np.int64)
        if probs.ndim != 2:
            raise ValidationError("probs must be a 2-d (n, k) array")
        n, k = probs.shape
        if n < 1:
            raise ValidationError("empty dataset: need at least one example")
        if k < 2:
            raise ValidationError(f"need at least 2 classes, got {k}")
        if labels.shape != (n,):
            raise ValidationError(
                f"labels shape {labels.shape} does not match {n} examples"
            )
        _check_prob_rows(probs, "probability")
        if np.any((labels < 0) | (labels >= k)):
            bad = int(np.argmax((labels < 0) | (labels >= k)))
            raise ValidationError(
                f"label {labels[bad]} out of range [0, {k}) at row {bad}"
            )
        transformed = self.transformed_probs
        if transformed is not None:
            transformed = quantize_f32(transformed)
            if transformed.ndim != 3 or transformed.shape[0] != n or transformed.shape[2] != k:
                raise ValidationError(
                    f"transformed_probs shape {transformed.shape} does not match (n={n}, l, k={k})"
                )
            if transformed.shape[1] < 1:
                raise ValidationError("transformed_probs needs at least one transformation")
            _check_prob_rows(transformed, "transformed probability", rows_per_example=transformed.shape[1])
        ease = self.ease
        if ease is not None:
            ease = quantize_f32(ease)
            if ease.shape != (n,):
                raise ValidationError(f"ease shape {ease.shape} does not match {n} examples")
            if np.any((ease < 0.0) | (ease > 1.0)):
                bad = int(np.argmax((ease < 0.0) | (ease > 1.0)))
                raise ValidationError(f"ease value {ease[bad]} outside [0, 1] at row {bad}")
            if transformed is not None:
                derived = cosine_ease(probs, transformed)
                gap = np.abs(derived - ease)
                if np.any(gap > EASE_CONSISTENCY_TOL):
                    bad = int(np.argmax(gap))
                    raise ValidationError(
                        f"stored ease {ease[bad]:.9f} at row {bad} disagrees with the "
                        f"value derived from transformed predictions ({derived[bad]:.9f})"
                    )
        object.__setattr__(self, "probs", _freeze(probs))
        object.__setattr__(self, "labels", _freeze(labels))
        object.__setattr__(
            self, "transformed_probs", _freeze(transformed) if transformed is not None else None
        )
        object.__setattr__(self, "ease", _freeze(ease) if ease is not None else None)

    @property
    def n_examples(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    @property
    def n_transforms(self) -> int:
        return 0 if self.transformed_probs is None else self.transformed_probs.shape[1]

    def subset(self, indices) -> "ScoreDataset":
        idx = np.asarray(indices)
        return ScoreDataset(
            probs=self.probs[idx],
            labels=self.labels[idx],
            transformed_probs=None if self.transformed_probs is None else self.transformed_probs[idx],
            ease=None if self.ease is None else self.ease[idx],
        )

    def with_ease(self, ease: np.ndarray) -> "ScoreDataset":
        return ScoreDataset(
            probs=self.probs,
            labels=self.labels,
            transformed_probs=self.transformed_probs,
            ease=ease,
        )


@dataclass(frozen=True)
class RegressionDataset:
    """Regression outputs: predicted mean/std, targets, and optionally the
    transformed-input means and/or the derived ease."""

    mu: np.ndarray
    sigma: np.ndarray
    targets: np.ndarray
    transformed_mu: Optional[np.ndarray] = None
    ease: Optional[np.ndarray] = None

    def __post_init__(self):
        mu = quantize_f32(self.mu)
        sigma = quantize_f32(self.sigma)
        targets = quantize_f32(self.targets)
        if mu.ndim != 1:
            raise ValidationError("mu must be a 1-d array")
        n = mu.shape[0]
        if n < 1:
            raise ValidationError("empty dataset: need at least one example")
        for name, arr in (("sigma", sigma), ("targets", targets)):
            if arr.shape != (n,):
                raise ValidationError(f"{name} shape {arr.shape} does not match {n} examples")
        if np.any(sigma <= 0.0):
            bad = int(np.argmax(sigma <= 0.0))
            raise ValidationError(f"sigma must be positive; got {sigma[bad]} at row {bad}")
        transformed = self.transformed_mu
        if transformed is not None:
            transformed = quantize_f32(transformed)
            if transformed.ndim != 2 or transformed.shape[0] != n or transformed.shape[1] < 1:
                raise ValidationError(
                    f"transformed_mu shape {transformed.shape} does not match (n={n}, l)"
                )
        ease = self.ease
        if ease is not None:
            ease = quantize_f32(ease)
            if ease.shape != (n,):
                raise ValidationError(f"ease shape {ease.shape} does not match {n} examples")
            if np.any((ease < 0.0) | (ease > 1.0)):
                bad = int(np.argmax((ease < 0.0) | (ease > 1.0)))
                raise ValidationError(f"ease value {ease[bad]} outside [0, 1] at row {bad}")
            if transformed is not None:
                derived = regression_ease(mu, transformed)
                gap = np.abs(derived - ease)
                if np.any(gap > EASE_CONSISTENCY_TOL):
                    bad = int(np.argmax(gap))
                    raise ValidationError(
                        f"stored ease {ease[bad]:.9f} at row {bad} disagrees with the "
                        f"value derived from transformed predictions ({derived[bad]:.9f})"
                    )
        object.__setattr__(self, "mu", _freeze(mu))
        object.__setattr__(self, "sigma", _freeze(sigma))
        object.__setattr__(self, "targets", _freeze(targets))
        object.__setattr__(
            self, "transformed_mu", _freeze(transformed) if transformed is not None else None
        )
        object.__setattr__(self, "ease", _freeze(ease) if ease is not None else None)

    @property
    def n_examples(self) -> int:
        return self.mu.shape[0]

    @property
    def n_transforms(self) -> int:
        return 0 if self.transformed_mu is None else self.transformed_mu.shape[1]

    def subset(self, indices) -> "RegressionDataset":
        idx = np.asarray(indices)
        return RegressionDataset(
            mu=self.mu[idx],
            sigma=self.sigma[idx],
            targets=self.targets[idx],
            transformed_mu=None if self.transformed_mu is None else self.transformed_mu[idx],
            ease=None if self.ease is None else self.ease[idx],
        )

    def with_ease(self, ease: np.ndarray) -> "RegressionDataset":
        return RegressionDataset(
            mu=self.mu,
            sigma=self.sigma,
            targets=self.targets,
            transformed_mu=self.transformed_mu,
            ease=ease,
        )


@dataclass(frozen=True)
class PredictionOutput:
    """Per-example prediction sets (classification) or intervals (regression).

    size is |C(x)| for sets and hi - lo for intervals; covered says whether
    the true label / target landed inside.
    """

    kind: str  # "classification" | "regression"
    covered: np.ndarray
    size: np.ndarray
    member: Optional[np.ndarray] = None  # (n, k) bool membership matrix
    lo: Optional[np.ndarray] = None
    hi: Optional[np.ndarray] = None
    bin_index: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.kind not in ("classification", "regression"):
            raise ValidationError(f"unknown prediction kind {self.kind!r}")
        if self.kind == "regression" and (self.lo is None or self.hi is None):
            raise ValidationError("regression output requires lo/hi bounds")

    @property
    def n_examples(self) -> int:
        return self.covered.shape[0]

    def label_sets(self) -> list:
        """Sorted class-index array per example (classification only)."""
        if self.member is None:
            raise ValidationError("label_sets is only defined for classification output")
        return [np.flatnonzero(row) for row in self.member]
