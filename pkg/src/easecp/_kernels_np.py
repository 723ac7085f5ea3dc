"""Pure-numpy implementations of the hot kernels.

The compiled backend (``easecp._kernels_cy``) implements the same surface
with identical arithmetic; ``easecp.backend`` picks one at import time.
Both backends must stay bit-for-bit interchangeable: the parity suite in
``tests/test_kernel_parity.py`` enforces it.

Randomization is counter-based: every uniform draw is a pure function of
(seed, example index, class index) via a splitmix64-style hash, so results
do not depend on evaluation order.
"""

import numpy as np

BACKEND_NAME = "python"

# Non-conformity score families (shared ids across backends).
KIND_LAC = 0
KIND_APS = 1
KIND_RAPS = 2
KIND_SAPS = 3

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = 0x9E3779B97F4A7C15
_ROW_PRIME = 0xD6E8FEB86659FD93
_COL_PRIME = 0xC2B2AE3D27D4EB4F
_TRIAL_PRIME = 0xD1B54A32D192ED03
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


def _mix64(z):
    """splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _mix64_int(z: int) -> int:
    z &= 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return (z ^ (z >> 31)) & 0xFFFFFFFFFFFFFFFF


def keyed_uniform_matrix(seed: int, n: int, k: int) -> np.ndarray:
    """u[i, j] = uniform in [0, 1) keyed by (seed, i, j)."""
    h0 = np.uint64(_mix64_int((seed + _GOLDEN) & 0xFFFFFFFFFFFFFFFF))
    rows = _mix64(h0 ^ (np.arange(n, dtype=np.uint64) * np.uint64(_ROW_PRIME)))
    cols = np.arange(k, dtype=np.uint64) * np.uint64(_COL_PRIME)
    h = _mix64(rows[:, None] ^ cols[None, :])
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def keyed_uniform_true(seed: int, labels: np.ndarray) -> np.ndarray:
    """u at the true label only: u[i] == keyed_uniform_matrix(...)[i, labels[i]]."""
    n = labels.shape[0]
    h0 = np.uint64(_mix64_int((seed + _GOLDEN) & 0xFFFFFFFFFFFFFFFF))
    rows = _mix64(h0 ^ (np.arange(n, dtype=np.uint64) * np.uint64(_ROW_PRIME)))
    cols = labels.astype(np.uint64) * np.uint64(_COL_PRIME)
    h = _mix64(rows ^ cols)
    return (h >> np.uint64(11)).astype(np.float64) * _INV_2_53


def _cum_before(probs: np.ndarray, order: np.ndarray) -> np.ndarray:
    """Per (i, j): sum of probabilities of classes ranked strictly above j."""
    sp = np.take_along_axis(probs, order, axis=1)
    cs = np.cumsum(sp, axis=1)
    before_sorted = np.empty_like(cs)
    before_sorted[:, 0] = 0.0
    before_sorted[:, 1:] = cs[:, :-1]
    out = np.empty_like(probs)
    np.put_along_axis(out, order, before_sorted, axis=1)
    return out


def score_matrix(kind, probs, order, rank, u, lam=0.0, kreg=1, w=0.0):
    """Non-conformity score for every (example, class) pair.

    probs: (n, k) float64 rows; order: (n, k) int32 class indices by
    descending probability; rank: (n, k) int32 1-based rank of each class;
    u: (n, k) float64 uniforms (pass ones for the deterministic mode).
    """
    if kind == KIND_LAC:
        return 1.0 - probs
    if kind in (KIND_APS, KIND_RAPS):
        s = _cum_before(probs, order) + u * probs
        if kind == KIND_RAPS:
            s = s + lam * np.maximum(0.0, rank.astype(np.float64) - float(kreg))
        return s
    if kind == KIND_SAPS:
        pmax = np.take_along_axis(probs, order[:, :1], axis=1)
        s = pmax + w * (rank.astype(np.float64) - 2.0 + u)
        top = rank == 1
        s[top] = (u * pmax)[top]
        return s
    raise ValueError(f"unknown score kind id {kind}")


def true_scores(kind, probs, order, rank, labels, u_true, lam=0.0, kreg=1, w=0.0):
    """Score of the true label per example (same arithmetic as score_matrix)."""
    n = probs.shape[0]
    ar = np.arange(n)
    p_y = probs[ar, labels]
    r_y = rank[ar, labels].astype(np.float64)
    if kind == KIND_LAC:
        return 1.0 - p_y
    if kind in (KIND_APS, KIND_RAPS):
        before = _cum_before(probs, order)[ar, labels]
        s = before + u_true * p_y
        if kind == KIND_RAPS:
            s = s + lam * np.maximum(0.0, r_y - float(kreg))
        return s
    if kind == KIND_SAPS:
        pmax = probs[ar, order[:, 0]]
        s = np.where(r_y == 1.0, u_true * pmax, pmax + w * (r_y - 2.0 + u_true))
        return s
    raise ValueError(f"unknown score kind id {kind}")


class _SplitMixStream:
    """Sequential splitmix64 stream; state advances by the golden gamma."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = _mix64_int(seed ^ _TRIAL_PRIME)

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & 0xFFFFFFFFFFFFFFFF
        return _mix64_int(self.state)


def _draw_and_sum(idx, difficulty, sizes, m, stream):
    """Partial Fisher-Yates draw of m indices, accumulating both sums in
    draw order (sequential adds, matching the compiled backend exactly)."""
    n = idx.shape[0]
    sd = 0.0
    ss = 0.0
    for t in range(m):
        r = stream.next_u64() % (n - t)
        j = t + r
        idx[t], idx[j] = idx[j], idx[t]
        v = idx[t]
        sd += difficulty[v]
        ss += sizes[v]
    return sd, ss


def property_count(difficulty, sizes, m, T, seed, disjoint=True) -> int:
    """Count trials where subset mean difficulty and mean size do not
    strictly oppose each other (ties count as satisfied).

    Each trial draws two size-m subsets (disjoint, or independent when
    disjoint=False) using a per-trial splitmix64 stream, so trial t is
    reproducible in isolation.
    """
    n = difficulty.shape[0]
    base = np.arange(n, dtype=np.int64)
    satisfied = 0
    for trial in range(T):
        stream = _SplitMixStream((seed + trial * _GOLDEN) & 0xFFFFFFFFFFFFFFFF)
        idx = base.copy()
        if disjoint:
            sd1, ss1 = _draw_and_sum(idx, difficulty, sizes, m, stream)
            sd2, ss2 = _draw_and_sum(idx[m:], difficulty, sizes, m, stream)
        else:
            sd1, ss1 = _draw_and_sum(idx, difficulty, sizes, m, stream)
            idx = base.copy()
            sd2, ss2 = _draw_and_sum(idx, difficulty, sizes, m, stream)
        if not ((sd1 < sd2 and ss1 > ss2) or (sd1 > sd2 and ss1 < ss2)):
            satisfied += 1
    return satisfied
