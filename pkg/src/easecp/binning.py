"""Ease estimation and uniform-mass binning.

Ease of an example is the mean similarity between the model's prediction
on the original input and on its transformed variants: cosine similarity
between softmax rows for classification, exp(-|mu - mu'|) for regression.
Low ease = unstable prediction = hard example.

Binning sorts examples by ease (ties broken by original index) and cuts
the sorted order into B near-equal groups: bin b gets sorted positions
floor((b-1)n/B) .. floor(bn/B). Value edges are derived from the index
partition for test-time assignment: the lower edge of bin b is the ease of
its first (smallest-ease) member, with the first edge pinned to 0 and the
last bin open-ended, so every test value lands in some bin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RegressionDataset, ScoreDataset, cosine_ease, regression_ease
from .errors import ValidationError


def compute_ease(ds) -> np.ndarray:
    """Per-example ease in [0, 1] from the dataset's transformed block.

    Returns the stored ease when the transformed block is absent.
    """
    if isinstance(ds, ScoreDataset):
        if ds.transformed_probs is not None:
            return cosine_ease(ds.probs, ds.transformed_probs)
    elif isinstance(ds, RegressionDataset):
        if ds.transformed_mu is not None:
            return regression_ease(ds.mu, ds.transformed_mu)
    else:
        raise ValidationError(f"compute_ease expects a dataset, got {type(ds).__name__}")
    if ds.ease is not None:
        return np.asarray(ds.ease, dtype=np.float64)
    raise ValidationError(
        "dataset has neither transformed predictions nor a stored ease vector"
    )


@dataclass(frozen=True)
class BinModel:
    """Uniform-mass partition fitted on calibration ease values.

    index_sets[b] holds the calibration indices of bin b (0-based bins,
    sorted by ease ascending, so bin 0 is the hardest group).
    lower_edges[b] is the smallest ease in bin b, with lower_edges[0]
    pinned to 0.0; the last bin has no upper bound.
    """

    n_bins: int
    index_sets: tuple
    lower_edges: np.ndarray

    def assign(self, ease_values) -> np.ndarray:
        """0-based bin index for each ease value.

        A value belongs to the first bin whose half-open edge interval
        [l_b, l_{b+1}) contains it; anything below the first edge maps to
        bin 0 and anything at or above the last edge maps to the last bin.
        """
        e = np.atleast_1d(np.asarray(ease_values, dtype=np.float64))
        return np.searchsorted(self.lower_edges[1:], e, side="right").astype(np.int64)

    def assign_one(self, ease_value: float) -> int:
        return int(self.assign([ease_value])[0])

    def counts_on(self, ease_values) -> np.ndarray:
        """Bin occupancy of the given ease values."""
        return np.bincount(self.assign(ease_values), minlength=self.n_bins)


def t_binning(ease, n_bins: int) -> BinModel:
    """Sort by (ease, original index) and cut into n_bins uniform-mass bins."""
    e = np.asarray(ease, dtype=np.float64)
    if e.ndim != 1:
        raise ValidationError("ease must be a 1-d vector")
    n = e.shape[0]
    if n_bins < 1:
        raise ValidationError(f"need at least one bin, got {n_bins}")
    if n_bins > n:
        raise ValidationError(f"cannot split {n} examples into {n_bins} bins")
    order = np.argsort(e, kind="stable")
    cuts = [(b * n) // n_bins for b in range(n_bins + 1)]
    index_sets = tuple(order[cuts[b] : cuts[b + 1]] for b in range(n_bins))
    lower = np.empty(n_bins, dtype=np.float64)
    lower[0] = 0.0
    for b in range(1, n_bins):
        lower[b] = e[order[cuts[b]]]
    return BinModel(n_bins=n_bins, index_sets=index_sets, lower_edges=lower)


def assign_bin(bin_model: BinModel, ease_value: float) -> int:
    """0-based bin for one ease value (see BinModel.assign)."""
    return bin_model.assign_one(ease_value)
