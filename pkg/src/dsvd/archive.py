"""Archive serialization: a DeltaArchive becomes one container file.

The file reuses the checkpoint byte layout. A rank-t factor pair for layer
"x" is stored as tensors "x.delta.A" (d x t) and "x.delta.B" (t x k) in the
layer's original dtype; dense and standalone payloads as "x.delta.dense".
The manifest travels as canonical JSON under the metadata key
"dsvd_manifest", so an archive is itself a valid checkpoint file.
"""

from __future__ import annotations

import json

from . import __version__ as TOOL_VERSION
from .delta import (
    FORMAT_VERSION,
    CompressedLayer,
    Dense,
    DeltaArchive,
    Factors,
    Unchanged,
    build_stats,
)
from .errors import (
    ManifestTensorMismatch,
    MissingManifest,
    UnsupportedFormatVersion,
)
from .tensor_store import (
    Checkpoint,
    Dtype,
    TensorRecord,
    matrix_dims,
    matrix_to_record,
    read_checkpoint,
    write_checkpoint,
)

MANIFEST_KEY = "dsvd_manifest"

A_SUFFIX = ".delta.A"
B_SUFFIX = ".delta.B"
DENSE_SUFFIX = ".delta.dense"


def _layer_kind(layer: CompressedLayer) -> str:
    if isinstance(layer.payload, Factors):
        return "factors"
    if isinstance(layer.payload, Dense):
        return "standalone" if layer.payload.standalone else "dense"
    return "unchanged"


def build_manifest(archive: DeltaArchive) -> dict:
    index = {}
    for name, layer in archive.layers.items():
        entry = {
            "kind": _layer_kind(layer),
            "original_shape": list(layer.original_shape),
            "original_dtype": layer.original_dtype.value,
        }
        if isinstance(layer.payload, Factors):
            entry["rank"] = layer.payload.rank
        index[name] = entry
    return {
        "format_version": archive.format_version,
        "tau": archive.tau,
        "base_fingerprint": archive.base_fingerprint,
        "tool_version": TOOL_VERSION,
        "layer_index": index,
    }


def manifest_json(archive: DeltaArchive) -> str:
    return json.dumps(build_manifest(archive), sort_keys=True, separators=(",", ":"))


def save_archive(archive: DeltaArchive, path) -> None:
    records: list[TensorRecord] = []
    for name, layer in archive.layers.items():
        payload = layer.payload
        if isinstance(payload, Factors):
            d, k = matrix_dims(layer.original_shape)
            t = payload.rank
            records.append(
                matrix_to_record(name + A_SUFFIX, payload.a, (d, t), layer.original_dtype)
            )
            records.append(
                matrix_to_record(name + B_SUFFIX, payload.b, (t, k), layer.original_dtype)
            )
        elif isinstance(payload, Dense):
            rec = payload.delta
            records.append(
                TensorRecord(
                    name=name + DENSE_SUFFIX,
                    dtype=rec.dtype,
                    shape=rec.shape,
                    data=rec.data,
                )
            )
    container = Checkpoint.from_records(records, metadata={MANIFEST_KEY: manifest_json(archive)})
    write_checkpoint(container, path)


def _parse_manifest(container: Checkpoint) -> dict:
    raw = container.metadata.get(MANIFEST_KEY)
    if raw is None:
        raise MissingManifest(f"metadata key {MANIFEST_KEY!r} is absent")
    try:
        manifest = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MissingManifest(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict) or not isinstance(manifest.get("layer_index"), dict):
        raise MissingManifest("manifest JSON lacks the expected structure")
    return manifest


def load_archive(path) -> DeltaArchive:
    container = read_checkpoint(path)
    manifest = _parse_manifest(container)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatVersion(
            f"archive format_version {version!r}, this build reads {FORMAT_VERSION}"
        )
    tau = float(manifest["tau"])
    base_fingerprint = str(manifest["base_fingerprint"])

    layers: dict[str, CompressedLayer] = {}
    claimed: set[str] = set()
    for name, entry in manifest["layer_index"].items():
        if not isinstance(entry, dict) or "kind" not in entry:
            raise MissingManifest(f"layer {name!r}: malformed index entry")
        kind = entry["kind"]
        shape = tuple(int(s) for s in entry.get("original_shape", ()))
        dtype = Dtype.from_tag(str(entry.get("original_dtype", "F32")))
        if (kind == "factors") != ("rank" in entry):
            raise ManifestTensorMismatch(
                f"layer {name!r}: rank must be present exactly for factors entries"
            )
        if kind == "factors":
            rank = int(entry["rank"])
            a_name, b_name = name + A_SUFFIX, name + B_SUFFIX
            if a_name not in container or b_name not in container:
                raise ManifestTensorMismatch(
                    f"layer {name!r}: factors entry lacks stored A/B tensors"
                )
            a_rec, b_rec = container[a_name], container[b_name]
            d, k = matrix_dims(shape)
            if a_rec.shape != (d, rank) or b_rec.shape != (rank, k):
                raise ManifestTensorMismatch(
                    f"layer {name!r}: stored factor shapes {a_rec.shape}/{b_rec.shape} "
                    f"inconsistent with shape {shape} at rank {rank}"
                )
            claimed.update((a_name, b_name))
            payload = Factors(
                a=a_rec.data.astype(float),
                b=b_rec.data.astype(float),
                rank=rank,
            )
        elif kind in ("dense", "standalone"):
            dense_name = name + DENSE_SUFFIX
            if dense_name not in container:
                raise ManifestTensorMismatch(
                    f"layer {name!r}: {kind} entry lacks a stored tensor"
                )
            rec = container[dense_name]
            if rec.shape != shape or rec.dtype != dtype:
                raise ManifestTensorMismatch(
                    f"layer {name!r}: stored tensor {rec.shape}/{rec.dtype.value} "
                    f"inconsistent with manifest {shape}/{dtype.value}"
                )
            claimed.add(dense_name)
            payload = Dense(
                delta=TensorRecord(name=name, dtype=dtype, shape=shape, data=rec.data),
                standalone=(kind == "standalone"),
            )
        elif kind == "unchanged":
            payload = Unchanged()
        else:
            raise ManifestTensorMismatch(f"layer {name!r}: unknown kind {kind!r}")
        layers[name] = CompressedLayer(
            name=name, original_shape=shape, original_dtype=dtype, payload=payload
        )

    orphans = set(container.names()) - claimed
    if orphans:
        raise ManifestTensorMismatch(
            f"stored tensors not referenced by the manifest: {sorted(orphans)[:3]}"
        )

    return DeltaArchive(
        layers=layers,
        tau=tau,
        base_fingerprint=base_fingerprint,
        format_version=int(version),
        stats=build_stats(layers, tau),
    )
