"""Checkpoint container I/O (safetensors-compatible byte layout).

Layout:
    bytes 0-7            u64 little-endian header length N
    bytes 8 .. 8+N       UTF-8 JSON header; each key but "__metadata__" maps a
                         tensor name to {"dtype", "shape", "data_offsets"},
                         offsets relative to byte 8+N
    bytes 8+N .. end     raw little-endian row-major payloads, covering the
                         payload section exactly, no gaps or overlaps

Tensors are written in lexicographic name order so identical checkpoints
serialize to identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateName,
    IoFailure,
    MalformedHeader,
    UnsupportedDtype,
)


class Dtype(Enum):
    F32 = "F32"
    F16 = "F16"

    @property
    def itemsize(self) -> int:
        return 4 if self is Dtype.F32 else 2

    @property
    def numpy_dtype(self) -> np.dtype:
        # explicit little-endian so payload bytes are platform independent
        return np.dtype("<f4") if self is Dtype.F32 else np.dtype("<f2")

    @classmethod
    def from_tag(cls, tag: str) -> "Dtype":
        try:
            return cls(tag)
        except ValueError:
            raise UnsupportedDtype(f"unsupported dtype tag {tag!r}") from None


@dataclass(frozen=True, eq=False)
class TensorRecord:
    """One named dense tensor: dtype, shape and raw values."""

    name: str
    dtype: Dtype
    shape: tuple[int, ...]
    data: np.ndarray

    def __post_init__(self):
        if not self.name:
            raise ValueError("tensor name must be non-empty")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if any(s < 0 for s in self.shape):
            raise ValueError(f"{self.name}: negative dimension in {self.shape}")
        arr = np.ascontiguousarray(self.data, dtype=self.dtype.numpy_dtype)
        if arr.size != self.numel:
            raise ValueError(
                f"{self.name}: buffer holds {arr.size} elements, "
                f"shape {self.shape} needs {self.numel}"
            )
        object.__setattr__(self, "data", arr.reshape(self.shape))

    @property
    def numel(self) -> int:
        return math.prod(self.shape)

    @property
    def nbytes(self) -> int:
        return self.numel * self.dtype.itemsize

    def to_bytes(self) -> bytes:
        return self.data.tobytes()


@dataclass(eq=False)
class Checkpoint:
    """Ordered (lexicographic) map of tensor name to TensorRecord."""

    tensors: dict[str, TensorRecord] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ordered: dict[str, TensorRecord] = {}
        for name in sorted(self.tensors):
            rec = self.tensors[name]
            if rec.name != name:
                raise ValueError(f"key {name!r} does not match record name {rec.name!r}")
            ordered[name] = rec
        self.tensors = ordered
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    @classmethod
    def from_records(cls, records, metadata=None) -> "Checkpoint":
        tensors: dict[str, TensorRecord] = {}
        for rec in records:
            if rec.name in tensors:
                raise DuplicateName(f"duplicate tensor name {rec.name!r}")
            tensors[rec.name] = rec
        return cls(tensors=tensors, metadata=dict(metadata or {}))

    def __len__(self) -> int:
        return len(self.tensors)

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> TensorRecord:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    """Serialize to the container layout (canonical: sorted names, compact JSON)."""
    header: dict[str, object] = {}
    if ckpt.metadata:
        header["__metadata__"] = dict(sorted(ckpt.metadata.items()))
    payloads: list[bytes] = []
    offset = 0
    for name, rec in ckpt.tensors.items():
        raw = rec.to_bytes()
        header[name] = {
            "dtype": rec.dtype.value,
            "shape": list(rec.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        payloads.append(raw)
        offset += len(raw)
    header_bytes = json.dumps(
        header, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")
    return struct.pack("<Q", len(header_bytes)) + header_bytes + b"".join(payloads)


def checkpoint_from_bytes(raw: bytes) -> Checkpoint:
    """Parse the container layout, validating header and offset coverage."""
    if len(raw) < 8:
        raise MalformedHeader(f"file holds {len(raw)} bytes, need at least 8")
    (header_len,) = struct.unpack_from("<Q", raw, 0)
    if 8 + header_len > len(raw):
        raise MalformedHeader(
            f"header length {header_len} exceeds file size {len(raw)}"
        )

    def reject_duplicates(pairs):
        seen = {}
        for key, value in pairs:
            if key in seen:
                raise DuplicateName(f"duplicate tensor name {key!r}")
            seen[key] = value
        return seen

    try:
        header = json.loads(
            raw[8 : 8 + header_len].decode("utf-8"),
            object_pairs_hook=reject_duplicates,
        )
    except DuplicateName:
        raise
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict):
        raise MalformedHeader("header JSON must be an object")

    metadata = {}
    meta_obj = header.pop("__metadata__", None)
    if meta_obj is not None:
        if not isinstance(meta_obj, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta_obj.items()
        ):
            raise MalformedHeader("__metadata__ must map strings to strings")
        metadata = dict(meta_obj)

    data_len = len(raw) - 8 - header_len
    records: dict[str, TensorRecord] = {}
    ranges: list[tuple[int, int]] = []
    for name, entry in header.items():
        if not name:
            raise MalformedHeader("empty tensor name")
        if not isinstance(entry, dict):
            raise MalformedHeader(f"{name}: entry must be an object")
        try:
            tag = entry["dtype"]
            shape = entry["shape"]
            begin, end = entry["data_offsets"]
        except (KeyError, TypeError, ValueError):
            raise MalformedHeader(f"{name}: entry missing dtype/shape/data_offsets") from None
        if not isinstance(tag, str):
            raise MalformedHeader(f"{name}: dtype must be a string")
        dtype = Dtype.from_tag(tag)
        if not isinstance(shape, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in shape
        ):
            raise MalformedHeader(f"{name}: shape must be non-negative integers")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (begin, end)):
            raise MalformedHeader(f"{name}: data_offsets must be integers")
        if not (0 <= begin <= end <= data_len):
            raise MalformedHeader(
                f"{name}: data_offsets [{begin}, {end}) outside payload of {data_len} bytes"
            )
        numel = math.prod(shape)
        if end - begin != numel * dtype.itemsize:
            raise MalformedHeader(
                f"{name}: data_offsets span {end - begin} bytes, "
                f"shape needs {numel * dtype.itemsize}"
            )
        if begin != end:
            ranges.append((begin, end))
        values = np.frombuffer(
            raw, dtype=dtype.numpy_dtype, count=numel, offset=8 + header_len + begin
        ).copy()
        records[name] = TensorRecord(name=name, dtype=dtype, shape=tuple(shape), data=values)

    ranges.sort()
    cursor = 0
    for begin, end in ranges:
        if begin < cursor:
            raise MalformedHeader(f"overlapping data_offsets at byte {begin}")
        if begin > cursor:
            raise MalformedHeader(f"gap in data_offsets at byte {cursor}")
        cursor = end
    if cursor != data_len:
        raise MalformedHeader(
            f"payload section holds {data_len} bytes, offsets cover {cursor}"
        )

    return Checkpoint(tensors=records, metadata=metadata)


def read_checkpoint(path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return checkpoint_from_bytes(raw)


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    raw = checkpoint_to_bytes(ckpt)
    try:
        Path(path).write_bytes(raw)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def as_matrix(rec: TensorRecord) -> np.ndarray:
    """View a tensor as a 2-D float64 matrix.

    ndim 1 becomes a column [n, 1]; ndim > 2 flattens to
    [shape[0], prod(shape[1:])]. F16 widens losslessly.
    """
    if len(rec.shape) < 1:
        raise ValueError(f"{rec.name}: need at least one dimension, got scalar")
    wide = rec.data.astype(np.float64)
    if len(rec.shape) == 1:
        return wide.reshape(rec.shape[0], 1)
    if len(rec.shape) == 2:
        return wide
    return wide.reshape(rec.shape[0], math.prod(rec.shape[1:]))


def matrix_dims(shape: tuple[int, ...]) -> tuple[int, int]:
    """(d, k) a tensor of this shape matricizes to under :func:`as_matrix`."""
    if len(shape) == 0:
        return (1, 1)
    if len(shape) == 1:
        return (shape[0], 1)
    return (shape[0], math.prod(shape[1:]))


def matrix_to_record(
    name: str, matrix: np.ndarray, shape: tuple[int, ...], dtype: Dtype
) -> TensorRecord:
    """Inverse of :func:`as_matrix`: reshape back and narrow to the storage dtype.

    Narrowing rounds to nearest even (numpy astype).
    """
    values = np.asarray(matrix, dtype=np.float64).reshape(shape)
    return TensorRecord(
        name=name, dtype=dtype, shape=tuple(shape), data=values.astype(dtype.numpy_dtype)
    )


def fingerprint(ckpt: Checkpoint) -> str:
    """SHA-256 over the canonical tensor content, hex encoded.

    Hashes names, dtypes, shapes and raw payloads in lexicographic order with
    length-prefixed framing; user metadata is excluded so a metadata-only edit
    does not orphan existing archives.
    """
    digest = hashlib.sha256()
    for name, rec in ckpt.tensors.items():
        encoded = name.encode("utf-8")
        digest.update(struct.pack("<Q", len(encoded)))
        digest.update(encoded)
        digest.update(rec.dtype.value.encode("ascii"))
        digest.update(struct.pack("<Q", len(rec.shape)))
        for dim in rec.shape:
            digest.update(struct.pack("<Q", dim))
        raw = rec.to_bytes()
        digest.update(struct.pack("<Q", len(raw)))
        digest.update(raw)
    return digest.hexdigest()
