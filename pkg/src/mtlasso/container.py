"""Bit-exact on-disk tensor container and CSV export.

A container is a pair of files sharing a path prefix: ``<path>.manifest.json``
describing named tensors and ``<path>.bin`` holding their values as
little-endian IEEE-754, each tensor 8-byte aligned with zero padding in
between. The format is the interchange surface for every CLI subcommand,
so writes must be byte-reproducible: the manifest is serialized with
sorted keys and no ambient state (timestamps, locale) enters either file.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class ContainerError(ValueError):
    """Malformed manifest, blob, or payload."""


_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_SIZES = {"f32": 4, "f64": 8}


@dataclass(frozen=True)
class TensorRecord:
    name: str
    dtype: str
    shape: tuple[int, ...]
    offset: int
    order: str = "row-major"

    @property
    def nbytes(self) -> int:
        n = 1
        for s in self.shape:
            n *= int(s)
        return n * _SIZES[self.dtype]


@dataclass
class TensorContainer:
    version: int
    tensors: list[TensorRecord]
    blob: bytes
    meta: dict = field(default_factory=dict)

    def names(self) -> list[str]:
        return [t.name for t in self.tensors]

    def get(self, name: str) -> np.ndarray:
        for rec in self.tensors:
            if rec.name == name:
                raw = self.blob[rec.offset : rec.offset + rec.nbytes]
                arr = np.frombuffer(raw, dtype=_DTYPES[rec.dtype]).reshape(rec.shape)
                return arr.astype(np.float64)
        raise KeyError(f"no tensor named {name!r}")


def write_container(path: str, tensors: dict[str, np.ndarray], dtypes: dict[str, str] | None = None,
                    meta: dict | None = None) -> None:
    """Write named tensors to <path>.manifest.json and <path>.bin.

    Values default to f64; per-tensor dtypes may be overridden via dtypes
    (e.g. {"W": "f32"} for imported network weights). Tensor names must
    be unique (enforced by the dict) and non-empty.
    """
    dtypes = dtypes or {}
    records = []
    chunks: list[bytes] = []
    offset = 0
    for name, value in tensors.items():
        if not name:
            raise ContainerError("tensor names must be non-empty")
        dtype = dtypes.get(name, "f64")
        if dtype not in _DTYPES:
            raise ContainerError(f"unsupported dtype {dtype!r} for tensor {name!r}")
        arr = np.ascontiguousarray(value, dtype=_DTYPES[dtype])
        pad = (-offset) % 8
        if pad:
            chunks.append(b"\x00" * pad)
            offset += pad
        records.append(TensorRecord(name=name, dtype=dtype, shape=tuple(int(s) for s in arr.shape),
                                    offset=offset))
        raw = arr.tobytes(order="C")
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "version": 1,
        "tensors": [
            {"name": r.name, "dtype": r.dtype, "shape": list(r.shape), "offset": r.offset,
             "order": r.order}
            for r in records
        ],
    }
    if meta:
        manifest["meta"] = meta
    with open(path + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    with open(path + ".bin", "wb") as fh:
        fh.write(b"".join(chunks))


def read_container(path: str) -> TensorContainer:
    """Read and validate a container written by write_container."""
    try:
        with open(path + ".manifest.json", "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ContainerError(f"cannot read manifest {path}.manifest.json: {exc}") from exc
    with open(path + ".bin", "rb") as fh:
        blob = fh.read()

    if not isinstance(manifest, dict) or manifest.get("version") != 1:
        raise ContainerError("unsupported container version")
    entries = manifest.get("tensors")
    if not isinstance(entries, list):
        raise ContainerError("manifest missing tensors list")

    records = []
    seen = set()
    spans = []
    for e in entries:
        try:
            rec = TensorRecord(name=e["name"], dtype=e["dtype"],
                               shape=tuple(int(s) for s in e["shape"]),
                               offset=int(e["offset"]), order=e.get("order", "row-major"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ContainerError(f"malformed tensor record: {e!r}") from exc
        if rec.dtype not in _DTYPES:
            raise ContainerError(f"tensor {rec.name!r}: unsupported dtype {rec.dtype!r}")
        if rec.order != "row-major":
            raise ContainerError(f"tensor {rec.name!r}: unsupported order {rec.order!r}")
        if rec.name in seen:
            raise ContainerError(f"duplicate tensor name {rec.name!r}")
        seen.add(rec.name)
        if rec.offset % 8 != 0:
            raise ContainerError(f"tensor {rec.name!r}: offset {rec.offset} not 8-byte aligned")
        end = rec.offset + rec.nbytes
        if rec.offset < 0 or end > len(blob):
            raise ContainerError(f"tensor {rec.name!r}: record out of bounds "
                                 f"(offset {rec.offset}, {rec.nbytes} bytes, blob {len(blob)})")
        spans.append((rec.offset, end, rec.name))
        records.append(rec)

    spans.sort()
    for (a0, a1, an), (b0, _b1, bn) in zip(spans, spans[1:]):
        if b0 < a1:
            raise ContainerError(f"tensors {an!r} and {bn!r} overlap")

    container = TensorContainer(version=1, tensors=records, blob=blob,
                                meta=manifest.get("meta", {}))
    for rec in records:
        raw = blob[rec.offset : rec.offset + rec.nbytes]
        arr = np.frombuffer(raw, dtype=_DTYPES[rec.dtype])
        if not np.all(np.isfinite(arr)):
            raise ContainerError(f"tensor {rec.name!r} contains non-finite values")
    return container


def format_real(x: float) -> str:
    """Fixed 17-significant-digit decimal rendering of a float."""
    if isinstance(x, float) and math.isnan(x):
        raise ContainerError("refusing to format NaN")
    return f"{x:.17g}"


def export_csv(path: str, header: list[str], rows: list[list]) -> None:
    """RFC-4180-style CSV with LF endings and 17 significant digits for reals."""
    width = len(header)
    for r in rows:
        if len(r) != width:
            raise ContainerError(f"ragged row: expected {width} fields, got {len(r)}")

    def cell(v) -> str:
        if isinstance(v, (bool, np.bool_)):
            s = "true" if v else "false"
        elif isinstance(v, (int, np.integer)):
            s = str(int(v))
        elif isinstance(v, (float, np.floating)):
            s = format_real(float(v))
        else:
            s = str(v)
        if any(c in s for c in (",", '"', "\n")):
            s = '"' + s.replace('"', '""') + '"'
        return s

    lines = [",".join(cell(h) for h in header)]
    lines.extend(",".join(cell(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
