"""Dataset and report files: the binary ``.pded`` format, a 1D CSV form, and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import Boundary, Dataset, Grid

MAGIC = b"PDED"
VERSION = 1
_BOUNDARY_CODES = {Boundary.ZERO_PAD: 0, Boundary.PERIODIC: 1}
_BOUNDARY_FROM_CODE = {v: k for k, v in _BOUNDARY_CODES.items()}


class FormatError(ValueError):
    """The bytes on disk do not form a valid dataset file."""


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    payload = data.encode() if isinstance(data, str) else data
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_bytes(data: Dataset) -> bytes:
    g = data.grid
    n = g.n
    N = data.values.shape[1]
    count = len(data.times)
    origin = g.origin if g.origin is not None else (0.0,) * n
    parts = [
        MAGIC,
        struct.pack("<HBI", VERSION, n, N),
        struct.pack(f"<{n}I", *g.dims),
        struct.pack(f"<{n}d", *g.spacing),
        struct.pack(f"<{n}d", *origin),
        struct.pack("<BI", _BOUNDARY_CODES[Boundary(g.boundary)], count),
        np.asarray(data.times, dtype="<f8").tobytes(),
        np.ascontiguousarray(data.values, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def dataset_from_bytes(blob: bytes) -> Dataset:
    view = memoryview(blob)
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(view):
            raise FormatError("file is truncated")
        out = struct.unpack_from(fmt, view, pos)
        pos += size
        return out

    if bytes(view[:4]) != MAGIC:
        raise FormatError("not a .pded file (bad magic bytes)")
    pos = 4
    version, n, N = take("<HBI")
    if version != VERSION:
        raise FormatError(f"unsupported .pded version {version}")
    if n < 1 or N < 1:
        raise FormatError("rank and component count must be positive")
    dims = take(f"<{n}I")
    spacing = take(f"<{n}d")
    origin = take(f"<{n}d")
    code, count = take("<BI")
    if code not in _BOUNDARY_FROM_CODE:
        raise FormatError(f"unknown boundary code {code}")
    n_values = count * N * int(np.prod(dims))
    need = 8 * (count + n_values)
    if len(view) - pos != need:
        raise FormatError(f"payload has {len(view) - pos} bytes, expected {need}")
    times = np.frombuffer(view, dtype="<f8", count=count, offset=pos).astype(float)
    pos += 8 * count
    values = np.frombuffer(view, dtype="<f8", count=n_values, offset=pos).astype(float)
    values = values.reshape((count, N) + tuple(dims))
    grid = Grid(tuple(dims), tuple(spacing), tuple(origin), _BOUNDARY_FROM_CODE[code])
    try:
        return Dataset(grid, times, values)
    except (ValueError, FloatingPointError) as exc:
        raise FormatError(str(exc)) from exc


def dataset_to_csv(data: Dataset) -> str:
    """``t,x,f1[,f2...]`` rows for one-dimensional data."""
    if data.grid.n != 1:
        raise ValueError("CSV export is only defined for one spatial dimension")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    N = data.values.shape[1]
    w.writerow(["t", "x"] + [f"f{k + 1}" for k in range(N)])
    x = data.grid.axis(0)
    for j, t in enumerate(data.times):
        for k, xk in enumerate(x):
            w.writerow([repr(float(t)), repr(float(xk))] + [repr(float(v)) for v in data.values[j, :, k]])
    return buf.getvalue()


def dataset_from_csv(text: str, boundary: Boundary | str = Boundary.ZERO_PAD) -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:2] != ["t", "x"]:
        raise FormatError("CSV dataset must start with a 't,x,f1,...' header")
    body = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if body.size == 0:
        raise FormatError("CSV dataset has no rows")
    times = np.unique(body[:, 0])
    x = np.unique(body[:, 1])
    N = body.shape[1] - 2
    if len(body) != len(times) * len(x):
        raise FormatError("CSV rows do not form a full time-by-space table")
    order = np.lexsort((body[:, 1], body[:, 0]))
    values = body[order, 2:].reshape(len(times), len(x), N).transpose(0, 2, 1)
    spacing = float(x[1] - x[0]) if len(x) > 1 else 1.0
    if len(x) > 2 and not np.allclose(np.diff(x), spacing, rtol=1e-9, atol=0):
        raise FormatError("CSV dataset must use a uniform grid")
    grid = Grid((len(x),), (spacing,), (float(x[0]),), Boundary(boundary))
    return Dataset(grid, times, values)


def save_dataset(data: Dataset, path, fmt: str | None = None) -> None:
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "pded")
    if fmt == "pded":
        atomic_write(path, dataset_to_bytes(data))
    elif fmt == "csv":
        atomic_write(path, dataset_to_csv(data))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    meta = dict(data.metadata)
    if fmt == "csv":
        # the CSV body has no room for the boundary rule, so the sidecar always carries it
        meta["boundary"] = Boundary(data.grid.boundary).value
    if meta:
        atomic_write(str(path) + ".meta.json", json.dumps(_jsonable(meta), indent=2, sort_keys=True))


def load_dataset(path, fmt: str | None = None) -> Dataset:
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "pded")
    meta_path = Path(str(path) + ".meta.json")
    metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    if fmt == "pded":
        data = dataset_from_bytes(Path(path).read_bytes())
    elif fmt == "csv":
        data = dataset_from_csv(Path(path).read_text(), metadata.get("boundary", Boundary.ZERO_PAD))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    return Dataset(data.grid, data.times, data.values, metadata)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Boundary):
        return obj.value
    return obj
