"""Reading and writing datasets.

Binary format "CPS1" (little-endian):

    magic   4 bytes  "CPS1"
    kind    u8       0 = classification, 1 = regression
    n       u32      number of examples
    k       u32      number of classes (0 for regression)
    l       u32      number of transformations (0 if absent)
    flags   u8       bit0 = has transformed block, bit1 = has ease block

followed, for classification, by f32 probs[n*k] (row-major), u32 labels[n],
optional f32 transformed[n*l*k], optional f32 ease[n]; for regression by
f32 mu[n], f32 sigma[n], f32 targets[n], optional f32 transformed_mu[n*l],
optional f32 ease[n].

CSV carries one example per row: ``label,p0..p{k-1}[,ease]`` for
classification and ``mu,sigma,target[,ease]`` for regression. Transformed
blocks are binary-only and are not written to CSV.
"""

from __future__ import annotations

import struct
from typing import Union

import numpy as np

from .data import RegressionDataset, ScoreDataset
from .errors import FormatError

MAGIC = b"CPS1"
_HEADER = struct.Struct("<4sBIIIB")
_FLAG_TRANSFORMED = 0x01
_FLAG_EASE = 0x02

Dataset = Union[ScoreDataset, RegressionDataset]


def _infer_format(path: str, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("binary", "csv"):
            raise FormatError(f"unknown dataset format {fmt!r}")
        return fmt
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def write_dataset(ds: Dataset, path: str, fmt: str | None = None) -> None:
    """Write a dataset; binary round-trips bit-exactly."""
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        _write_binary(ds, path)
    else:
        _write_csv(ds, path)


def load_dataset(path: str, fmt: str | None = None) -> Dataset:
    """Load and validate a dataset written by write_dataset."""
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        return _read_binary(path)
    return _read_csv(path)


def _write_binary(ds: Dataset, path: str) -> None:
    is_reg = isinstance(ds, RegressionDataset)
    n = ds.n_examples
    l = ds.n_transforms
    flags = 0
    if l > 0:
        flags |= _FLAG_TRANSFORMED
    if ds.ease is not None:
        flags |= _FLAG_EASE
    with open(path, "wb") as fh:
        if is_reg:
            fh.write(_HEADER.pack(MAGIC, 1, n, 0, l, flags))
            fh.write(ds.mu.astype("<f4").tobytes())
            fh.write(ds.sigma.astype("<f4").tobytes())
            fh.write(ds.targets.astype("<f4").tobytes())
            if l > 0:
                fh.write(ds.transformed_mu.astype("<f4").tobytes())
        else:
            fh.write(_HEADER.pack(MAGIC, 0, n, ds.n_classes, l, flags))
            fh.write(ds.probs.astype("<f4").tobytes())
            fh.write(ds.labels.astype("<u4").tobytes())
            if l > 0:
                fh.write(ds.transformed_probs.astype("<f4").tobytes())
        if ds.ease is not None:
            fh.write(ds.ease.astype("<f4").tobytes())


def _take(buf: bytes, offset: int, count: int, dtype: str, what: str):
    nbytes = count * np.dtype(dtype).itemsize
    if offset + nbytes > len(buf):
        raise FormatError(f"truncated file: {what} block needs {nbytes} bytes")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    return arr, offset + nbytes


def _read_binary(path: str) -> Dataset:
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise FormatError("malformed header: file shorter than the fixed header")
    magic, kind, n, k, l, flags = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"malformed header: bad magic {magic!r}")
    if kind not in (0, 1):
        raise FormatError(f"malformed header: unknown kind {kind}")
    has_transformed = bool(flags & _FLAG_TRANSFORMED)
    has_ease = bool(flags & _FLAG_EASE)
    if has_transformed != (l > 0):
        raise FormatError("malformed header: transformed flag disagrees with l")
    off = _HEADER.size
    if kind == 0:
        probs, off = _take(buf, off, n * k, "<f4", "probs")
        labels, off = _take(buf, off, n, "<u4", "labels")
        transformed = None
        if has_transformed:
            transformed, off = _take(buf, off, n * l * k, "<f4", "transformed")
            transformed = transformed.reshape(n, l, k)
        ease = None
        if has_ease:
            ease, off = _take(buf, off, n, "<f4", "ease")
        if off != len(buf):
            raise FormatError(f"dimension mismatch: {len(buf) - off} trailing bytes")
        return ScoreDataset(
            probs=probs.reshape(n, k),
            labels=labels.astype(np.int64),
            transformed_probs=transformed,
            ease=ease,
        )
    mu, off = _take(buf, off, n, "<f4", "mu")
    sigma, off = _take(buf, off, n, "<f4", "sigma")
    targets, off = _take(buf, off, n, "<f4", "targets")
    transformed = None
    if has_transformed:
        transformed, off = _take(buf, off, n * l, "<f4", "transformed_mu")
        transformed = transformed.reshape(n, l)
    ease = None
    if has_ease:
        ease, off = _take(buf, off, n, "<f4", "ease")
    if off != len(buf):
        raise FormatError(f"dimension mismatch: {len(buf) - off} trailing bytes")
    return RegressionDataset(
        mu=mu, sigma=sigma, targets=targets, transformed_mu=transformed, ease=ease
    )


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _write_csv(ds: Dataset, path: str) -> None:
    lines = []
    if isinstance(ds, RegressionDataset):
        header = "mu,sigma,target" + (",ease" if ds.ease is not None else "")
        lines.append(header)
        for i in range(ds.n_examples):
            row = [_fmt_float(ds.mu[i]), _fmt_float(ds.sigma[i]), _fmt_float(ds.targets[i])]
            if ds.ease is not None:
                row.append(_fmt_float(ds.ease[i]))
            lines.append(",".join(row))
    else:
        k = ds.n_classes
        header = "label," + ",".join(f"p{j}" for j in range(k))
        if ds.ease is not None:
            header += ",ease"
        lines.append(header)
        for i in range(ds.n_examples):
            row = [str(int(ds.labels[i]))]
            row.extend(_fmt_float(v) for v in ds.probs[i])
            if ds.ease is not None:
                row.append(_fmt_float(ds.ease[i]))
            lines.append(",".join(row))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv(path: str) -> Dataset:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise FormatError("malformed header: empty CSV file")
    cols = lines[0].split(",")
    if cols[0] == "mu":
        expected = ["mu", "sigma", "target"]
        has_ease = cols == expected + ["ease"]
        if not (cols == expected or has_ease):
            raise FormatError(f"malformed header: {lines[0]!r}")
        rows = _parse_rows(lines[1:], len(cols))
        return RegressionDataset(
            mu=rows[:, 0],
            sigma=rows[:, 1],
            targets=rows[:, 2],
            ease=rows[:, 3] if has_ease else None,
        )
    if cols[0] == "label":
        has_ease = cols[-1] == "ease"
        k = len(cols) - 1 - (1 if has_ease else 0)
        if k < 2 or cols[1 : 1 + k] != [f"p{j}" for j in range(k)]:
            raise FormatError(f"malformed header: {lines[0]!r}")
        rows = _parse_rows(lines[1:], len(cols))
        labels = rows[:, 0]
        if np.any(labels != np.round(labels)):
            bad = int(np.argmax(labels != np.round(labels)))
            raise FormatError(f"non-integer label at data row {bad}")
        return ScoreDataset(
            probs=rows[:, 1 : 1 + k],
            labels=labels.astype(np.int64),
            ease=rows[:, 1 + k] if has_ease else None,
        )
    raise FormatError(f"malformed header: {lines[0]!r}")


def _parse_rows(lines: list, width: int) -> np.ndarray:
    out = np.empty((len(lines), width), dtype=np.float64)
    for i, ln in enumerate(lines):
        parts = ln.split(",")
        if len(parts) != width:
            raise FormatError(
                f"dimension mismatch: data row {i} has {len(parts)} columns, expected {width}"
            )
        try:
            out[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"unparseable value at data row {i}: {exc}") from None
    return out
