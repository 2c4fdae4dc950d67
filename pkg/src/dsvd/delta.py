"""Per-layer delta compression: extraction, energy-based rank selection,
truncated factorization and checkpoint reconstruction.

The cumulative energy E(t) is linear in the singular values,
E(t) = (sigma_1 + ... + sigma_t) / (sigma_1 + ... + sigma_r), and the
selected rank is the smallest t with E(t) >= tau. The conventional squared
variant is available behind ``squared=True`` and is off by default.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DimensionMismatch,
    DtypeMismatch,
    FingerprintMismatch,
    InvalidTau,
    LayerSetMismatch,
    ShapeMismatch,
    ZeroEnergy,
)
from .linalg import svd
from .tensor_store import (
    Checkpoint,
    Dtype,
    TensorRecord,
    as_matrix,
    fingerprint,
    matrix_dims,
    matrix_to_record,
)

FORMAT_VERSION = 1

# a layer counts as unchanged when its total singular mass is below this
# scale-aware floor
ZERO_ENERGY_SCALE = 1e-12


class MismatchPolicy(Enum):
    STRICT = "strict"
    SKIP_MISMATCHED = "skip"


@dataclass(frozen=True, eq=False)
class Factors:
    """Low-rank pair: a (d x t) = U_t * diag(sigma_1..t), b (t x k) = Vt_t."""

    a: np.ndarray
    b: np.ndarray
    rank: int


@dataclass(frozen=True, eq=False)
class Dense:
    """Dense payload: the delta tensor, or the full fine-tuned tensor when standalone."""

    delta: TensorRecord
    standalone: bool = False


@dataclass(frozen=True)
class Unchanged:
    pass


@dataclass(frozen=True, eq=False)
class CompressedLayer:
    name: str
    original_shape: tuple[int, ...]
    original_dtype: Dtype
    payload: Factors | Dense | Unchanged


@dataclass(eq=False)
class CompressionStats:
    dense_param_count: int
    stored_param_count: int
    per_layer_rank: dict[str, int]
    tau: float
    mismatch_warnings: int = 0


@dataclass(eq=False)
class DeltaArchive:
    layers: dict[str, CompressedLayer]
    tau: float
    base_fingerprint: str
    format_version: int
    stats: CompressionStats

    def __post_init__(self):
        self.layers = {name: self.layers[name] for name in sorted(self.layers)}


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """Descending singular values with their normalized cumulative mass."""

    sigma: np.ndarray
    cumulative: np.ndarray
    total: float


def compute_delta(w_ft: np.ndarray, w_pre: np.ndarray) -> np.ndarray:
    ft = np.asarray(w_ft, dtype=np.float64)
    pre = np.asarray(w_pre, dtype=np.float64)
    if ft.shape != pre.shape:
        raise DimensionMismatch(f"shape {ft.shape} vs {pre.shape}")
    return ft - pre


def cumulative_energy(
    sigma, *, squared: bool = False, zero_threshold: float = 0.0
) -> EnergyProfile:
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("sigma must be a non-empty 1-D sequence")
    if np.any(s < 0.0) or np.any(s[1:] > s[:-1]):
        raise ValueError("sigma must be non-negative and non-increasing")
    mass = s * s if squared else s
    partial = np.cumsum(mass)
    total = float(partial[-1])
    if total <= zero_threshold:
        raise ZeroEnergy(f"total singular mass {total} <= threshold {zero_threshold}")
    return EnergyProfile(sigma=s, cumulative=partial / total, total=total)


def select_rank(profile: EnergyProfile, tau: float) -> int:
    """Smallest t with E(t) >= tau; trailing exact-zero sigmas are never selected."""
    if not (0.0 < tau <= 1.0):
        raise InvalidTau(f"tau must be in (0, 1], got {tau}")
    return int(np.argmax(profile.cumulative >= tau)) + 1


def factorize_layer(
    delta,
    tau: float,
    *,
    squared: bool = False,
    record_name: str = "delta",
    original_shape: tuple[int, ...] | None = None,
    original_dtype: Dtype = Dtype.F32,
) -> Factors | Dense | Unchanged:
    """Compress one delta matrix: SVD, rank selection, then factors / dense / unchanged.

    Factors are kept only under strict storage saving, t*(d+k) < d*k; a dense
    result is narrowed to ``original_dtype`` exactly as it would be stored.
    """
    if not (0.0 < tau <= 1.0):
        raise InvalidTau(f"tau must be in (0, 1], got {tau}")
    mat = np.asarray(delta, dtype=np.float64)
    d, k = mat.shape
    numel = d * k

    def dense() -> Dense:
        shape = tuple(original_shape) if original_shape is not None else (d, k)
        return Dense(
            delta=matrix_to_record(record_name, mat, shape, original_dtype)
        )

    if not np.any(mat):
        return Unchanged()
    result = svd(mat)
    if float(np.sum(result.sigma)) <= ZERO_ENERGY_SCALE * math.sqrt(numel):
        return Unchanged()
    try:
        profile = cumulative_energy(result.sigma, squared=squared)
    except ZeroEnergy:
        # squared mass can underflow to zero even when linear mass does not
        return Unchanged()
    t = select_rank(profile, tau)
    if t * (d + k) >= numel:
        return dense()
    a = result.u[:, :t] * result.sigma[:t]
    b = result.vt[:t, :]
    return Factors(a=a, b=b, rank=t)


def _matricize(rec: TensorRecord) -> np.ndarray:
    if len(rec.shape) == 0:
        return rec.data.astype(np.float64).reshape(1, 1)
    return as_matrix(rec)


def _resolve_threads(threads: int) -> int:
    if threads <= 0:
        return os.cpu_count() or 1
    return threads


def _layer_rank(layer: CompressedLayer) -> int:
    if isinstance(layer.payload, Factors):
        return layer.payload.rank
    if isinstance(layer.payload, Dense):
        return min(matrix_dims(layer.original_shape))
    return 0


def build_stats(layers: dict[str, CompressedLayer], tau: float, warnings: int = 0) -> CompressionStats:
    dense_params = 0
    stored_params = 0
    ranks: dict[str, int] = {}
    for name, layer in layers.items():
        d, k = matrix_dims(layer.original_shape)
        ranks[name] = _layer_rank(layer)
        if isinstance(layer.payload, Factors):
            dense_params += d * k
            stored_params += layer.payload.rank * (d + k)
        elif isinstance(layer.payload, Dense):
            dense_params += d * k
            stored_params += d * k
    return CompressionStats(
        dense_param_count=dense_params,
        stored_param_count=stored_params,
        per_layer_rank=ranks,
        tau=tau,
        mismatch_warnings=warnings,
    )


def compress_checkpoint(
    pre: Checkpoint,
    ft: Checkpoint,
    tau: float,
    policy: MismatchPolicy = MismatchPolicy.STRICT,
    *,
    squared: bool = False,
    threads: int = 1,
) -> DeltaArchive:
    """Compress every fine-tuned layer against its base counterpart.

    Layers are processed independently (optionally in parallel); the result
    is identical regardless of thread count.
    """
    if not (0.0 < tau <= 1.0):
        raise InvalidTau(f"tau must be in (0, 1], got {tau}")
    strict = policy is MismatchPolicy.STRICT

    jobs: list[tuple[str, str]] = []  # (kind, name)
    warnings = 0
    for name, ft_rec in ft.tensors.items():
        if name not in pre:
            if strict:
                raise LayerSetMismatch(
                    f"layer {name!r} present only in the fine-tuned checkpoint"
                )
            jobs.append(("standalone", name))
            warnings += 1
            continue
        pre_rec = pre[name]
        if pre_rec.shape != ft_rec.shape:
            raise ShapeMismatch(
                f"layer {name!r}: base shape {pre_rec.shape} vs fine-tuned {ft_rec.shape}"
            )
        if pre_rec.dtype != ft_rec.dtype:
            if strict:
                raise DtypeMismatch(
                    f"layer {name!r}: base dtype {pre_rec.dtype.value} "
                    f"vs fine-tuned {ft_rec.dtype.value}"
                )
            jobs.append(("standalone", name))
            warnings += 1
            continue
        jobs.append(("delta", name))
    for name in pre.tensors:
        if name not in ft:
            if strict:
                raise LayerSetMismatch(
                    f"layer {name!r} present only in the base checkpoint"
                )
            jobs.append(("unchanged", name))
            warnings += 1

    def run(job: tuple[str, str]) -> CompressedLayer:
        kind, name = job
        if kind == "standalone":
            rec = ft[name]
            return CompressedLayer(
                name=name,
                original_shape=rec.shape,
                original_dtype=rec.dtype,
                payload=Dense(delta=rec, standalone=True),
            )
        if kind == "unchanged":
            rec = pre[name]
            return CompressedLayer(
                name=name,
                original_shape=rec.shape,
                original_dtype=rec.dtype,
                payload=Unchanged(),
            )
        ft_rec = ft[name]
        if ft_rec.numel == 0:
            return CompressedLayer(
                name=name,
                original_shape=ft_rec.shape,
                original_dtype=ft_rec.dtype,
                payload=Unchanged(),
            )
        delta = compute_delta(_matricize(ft_rec), _matricize(pre[name]))
        payload = factorize_layer(
            delta,
            tau,
            squared=squared,
            record_name=name,
            original_shape=ft_rec.shape,
            original_dtype=ft_rec.dtype,
        )
        return CompressedLayer(
            name=name,
            original_shape=ft_rec.shape,
            original_dtype=ft_rec.dtype,
            payload=payload,
        )

    workers = _resolve_threads(threads)
    if workers == 1 or len(jobs) <= 1:
        compressed = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            compressed = list(pool.map(run, jobs))

    layers = {layer.name: layer for layer in compressed}
    return DeltaArchive(
        layers=layers,
        tau=tau,
        base_fingerprint=fingerprint(pre),
        format_version=FORMAT_VERSION,
        stats=build_stats(layers, tau, warnings),
    )


def reconstruct_checkpoint(
    base: Checkpoint, archive: DeltaArchive, *, force: bool = False
) -> Checkpoint:
    """Apply the archive to the base model: W = W_pre + reconstructed delta.

    Base layers absent from the archive pass through untouched; standalone
    layers are emitted verbatim.
    """
    if not force:
        actual = fingerprint(base)
        if actual != archive.base_fingerprint:
            raise FingerprintMismatch(
                f"base checkpoint fingerprint {actual[:12]}... does not match "
                f"archive fingerprint {archive.base_fingerprint[:12]}..."
            )
    out: dict[str, TensorRecord] = dict(base.tensors)
    for name, layer in archive.layers.items():
        payload = layer.payload
        if isinstance(payload, Unchanged):
            continue
        if isinstance(payload, Dense) and payload.standalone:
            out[name] = payload.delta
            continue
        if name not in base:
            raise LayerSetMismatch(f"layer {name!r} missing from the base checkpoint")
        base_rec = base[name]
        if base_rec.shape != layer.original_shape:
            raise ShapeMismatch(
                f"layer {name!r}: base shape {base_rec.shape} vs archived "
                f"{layer.original_shape}"
            )
        base_mat = _matricize(base_rec)
        if isinstance(payload, Dense):
            delta_mat = _matricize(payload.delta)
        else:
            delta_mat = payload.a @ payload.b
        if delta_mat.shape != base_mat.shape:
            raise ShapeMismatch(
                f"layer {name!r}: delta shape {delta_mat.shape} vs base "
                f"matrix {base_mat.shape}"
            )
        out[name] = matrix_to_record(
            name, base_mat + delta_mat, layer.original_shape, layer.original_dtype
        )
    return Checkpoint(tensors=out, metadata=dict(base.metadata))
