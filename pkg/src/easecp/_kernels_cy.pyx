# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled implementations of the hot kernels.

Mirrors ``easecp._kernels_np`` operation for operation; the two backends
must return bit-identical results (the extension is built with
-ffp-contract=off so the compiler cannot fuse multiply-adds that numpy
performs as separate rounded steps).
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint64_t

cnp.import_array()

BACKEND_NAME = "compiled"

KIND_LAC = 0
KIND_APS = 1
KIND_RAPS = 2
KIND_SAPS = 3

cdef int _K_LAC = 0
cdef int _K_APS = 1
cdef int _K_RAPS = 2
cdef int _K_SAPS = 3

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _ROW_PRIME = 0xD6E8FEB86659FD93ULL
cdef uint64_t _COL_PRIME = 0xC2B2AE3D27D4EB4FULL
cdef uint64_t _TRIAL_PRIME = 0xD1B54A32D192ED03ULL
cdef double _INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def keyed_uniform_matrix(object seed, Py_ssize_t n, Py_ssize_t k):
    """u[i, j] = uniform in [0, 1) keyed by (seed, i, j)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint64_t h0 = _mix64(<uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
    cdef uint64_t rh, h
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            rh = _mix64(h0 ^ (<uint64_t> i * _ROW_PRIME))
            for j in range(k):
                h = _mix64(rh ^ (<uint64_t> j * _COL_PRIME))
                o[i, j] = <double> (h >> 11) * _INV_2_53
    return out


def keyed_uniform_true(object seed, cnp.ndarray labels_arr):
    """u at the true label only (consistent with keyed_uniform_matrix)."""
    cdef const int64_t[::1] labels = np.ascontiguousarray(labels_arr, dtype=np.int64)
    cdef Py_ssize_t n = labels.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t h0 = _mix64(<uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
    cdef uint64_t rh, h
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            rh = _mix64(h0 ^ (<uint64_t> i * _ROW_PRIME))
            h = _mix64(rh ^ (<uint64_t> labels[i] * _COL_PRIME))
            o[i] = <double> (h >> 11) * _INV_2_53
    return out


def score_matrix(int kind, const double[:, ::1] probs, const int32_t[:, ::1] order,
                 const int32_t[:, ::1] rank, const double[:, ::1] u,
                 double lam=0.0, long kreg=1, double w=0.0):
    """Non-conformity score for every (example, class) pair."""
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, t, j
    cdef double acc, pen, pmax, tmp
    cdef double dkreg = <double> kreg

    if kind == _K_LAC:
        with nogil:
            for i in range(n):
                for j in range(k):
                    o[i, j] = 1.0 - probs[i, j]
        return out

    if kind == _K_APS or kind == _K_RAPS:
        with nogil:
            for i in range(n):
                acc = 0.0
                for t in range(k):
                    j = order[i, t]
                    tmp = u[i, j] * probs[i, j]
                    o[i, j] = acc + tmp
                    acc = acc + probs[i, j]
                if kind == _K_RAPS:
                    for j in range(k):
                        pen = (<double> rank[i, j]) - dkreg
                        if pen < 0.0:
                            pen = 0.0
                        tmp = lam * pen
                        o[i, j] = o[i, j] + tmp
        return out

    if kind == _K_SAPS:
        with nogil:
            for i in range(n):
                pmax = probs[i, order[i, 0]]
                for j in range(k):
                    if rank[i, j] == 1:
                        o[i, j] = u[i, j] * pmax
                    else:
                        tmp = ((<double> rank[i, j]) - 2.0) + u[i, j]
                        tmp = w * tmp
                        o[i, j] = pmax + tmp
        return out

    raise ValueError(f"unknown score kind id {kind}")


def true_scores(int kind, const double[:, ::1] probs, const int32_t[:, ::1] order,
                const int32_t[:, ::1] rank, const int64_t[::1] labels, const double[::1] u_true,
                double lam=0.0, long kreg=1, double w=0.0):
    """Score of the true label per example."""
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, t
    cdef int64_t y
    cdef double acc, pen, pmax, tmp, ry
    cdef double dkreg = <double> kreg

    with nogil:
        for i in range(n):
            y = labels[i]
            if kind == _K_LAC:
                o[i] = 1.0 - probs[i, y]
            elif kind == _K_APS or kind == _K_RAPS:
                acc = 0.0
                for t in range(k):
                    if order[i, t] == y:
                        break
                    acc = acc + probs[i, order[i, t]]
                tmp = u_true[i] * probs[i, y]
                o[i] = acc + tmp
                if kind == _K_RAPS:
                    pen = (<double> rank[i, y]) - dkreg
                    if pen < 0.0:
                        pen = 0.0
                    tmp = lam * pen
                    o[i] = o[i] + tmp
            else:  # SAPS
                pmax = probs[i, order[i, 0]]
                ry = <double> rank[i, y]
                if ry == 1.0:
                    o[i] = u_true[i] * pmax
                else:
                    tmp = (ry - 2.0) + u_true[i]
                    tmp = w * tmp
                    o[i] = pmax + tmp
    return out


def property_count(const double[::1] difficulty, const double[::1] sizes,
                   long m, long T, object seed, bint disjoint=True):
    """Count trials whose subset mean difficulty/size do not strictly oppose."""
    cdef Py_ssize_t n = difficulty.shape[0]
    cdef uint64_t base_seed = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx_arr = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] idx = idx_arr
    cdef uint64_t state, r
    cdef Py_ssize_t trial, t, j, v
    cdef long satisfied = 0
    cdef double sd1, ss1, sd2, ss2
    cdef int64_t swp

    with nogil:
        for trial in range(T):
            state = _mix64((base_seed + <uint64_t> trial * _GOLDEN) ^ _TRIAL_PRIME)
            for t in range(n):
                idx[t] = t
            sd1 = 0.0
            ss1 = 0.0
            sd2 = 0.0
            ss2 = 0.0
            for t in range(m):
                state = state + _GOLDEN
                r = _mix64(state)
                j = t + <Py_ssize_t> (r % <uint64_t> (n - t))
                swp = idx[t]
                idx[t] = idx[j]
                idx[j] = swp
                v = idx[t]
                sd1 = sd1 + difficulty[v]
                ss1 = ss1 + sizes[v]
            if disjoint:
                # continue the Fisher-Yates walk on positions [m, 2m)
                for t in range(m):
                    state = state + _GOLDEN
                    r = _mix64(state)
                    j = m + t + <Py_ssize_t> (r % <uint64_t> (n - m - t))
                    swp = idx[m + t]
                    idx[m + t] = idx[j]
                    idx[j] = swp
                    v = idx[m + t]
                    sd2 = sd2 + difficulty[v]
                    ss2 = ss2 + sizes[v]
            else:
                for t in range(n):
                    idx[t] = t
                for t in range(m):
                    state = state + _GOLDEN
                    r = _mix64(state)
                    j = t + <Py_ssize_t> (r % <uint64_t> (n - t))
                    swp = idx[t]
                    idx[t] = idx[j]
                    idx[j] = swp
                    v = idx[t]
                    sd2 = sd2 + difficulty[v]
                    ss2 = ss2 + sizes[v]
            if not ((sd1 < sd2 and ss1 > ss2) or (sd1 > sd2 and ss1 < ss2)):
                satisfied += 1
    return satisfied
