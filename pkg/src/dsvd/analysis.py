"""Diagnostics: per-layer similarity profile, per-group rank averages,
compression accounting and windowed SSIM."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .archive import _layer_kind, manifest_json
from .delta import Dense, DeltaArchive, Factors
from .errors import DimensionMismatch, NoSharedLayers, WindowTooLarge
from .linalg import cosine_similarity
from .tensor_store import Checkpoint, matrix_dims

# cosine above this counts as "effectively identical" in report summaries
IDENTICAL_COSINE = 0.9999

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class LayerGroupSpec:
    """Ordered (group_name, prefixes) pairs; first matching prefix wins,
    unmatched layers land in "other"."""

    groups: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def default(cls) -> "LayerGroupSpec":
        return cls(
            groups=(
                ("conv_in", ("conv_in",)),
                ("conv_out", ("conv_out",)),
                ("down_blocks", ("down_blocks",)),
                ("mid_block", ("mid_block",)),
                ("up_blocks", ("up_blocks",)),
            )
        )

    @classmethod
    def from_json_file(cls, path) -> "LayerGroupSpec":
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        groups = tuple(
            (str(g["name"]), tuple(str(p) for p in g["prefixes"]))
            for g in doc["groups"]
        )
        return cls(groups=groups)

    def group_of(self, layer_name: str) -> str:
        for group_name, prefixes in self.groups:
            if any(layer_name.startswith(p) for p in prefixes):
                return group_name
        return "other"


@dataclass(frozen=True)
class SimilarityReport:
    entries: tuple[tuple[str, float], ...]
    summary: float  # fraction of layers with cosine > IDENTICAL_COSINE

    def to_dict(self) -> dict:
        return {
            "entries": [{"layer": n, "cosine": c} for n, c in self.entries],
            "high_similarity_fraction": self.summary,
        }


def layer_similarity_report(pre: Checkpoint, ft: Checkpoint) -> SimilarityReport:
    """Cosine similarity of each shared layer, flattened, lexicographic order."""
    entries: list[tuple[str, float]] = []
    for name, ft_rec in ft.tensors.items():
        if name not in pre:
            continue
        pre_rec = pre[name]
        if pre_rec.shape != ft_rec.shape or pre_rec.numel == 0:
            continue
        a = pre_rec.data.astype(np.float64).reshape(1, -1)
        b = ft_rec.data.astype(np.float64).reshape(1, -1)
        entries.append((name, cosine_similarity(a, b)))
    if not entries:
        raise NoSharedLayers("checkpoints share no layers of matching shape")
    same = sum(1 for _, c in entries if c > IDENTICAL_COSINE)
    return SimilarityReport(entries=tuple(entries), summary=same / len(entries))


def rank_table(archive: DeltaArchive, spec: LayerGroupSpec | None = None) -> dict[str, float]:
    """Average remaining rank per layer group: t for factors, min(d, k) for
    dense payloads, 0 for unchanged."""
    spec = spec or LayerGroupSpec.default()
    sums: dict[str, int] = {}
    counts: dict[str, int] = {}
    for name, layer in archive.layers.items():
        group = spec.group_of(name)
        if isinstance(layer.payload, Factors):
            rank = layer.payload.rank
        elif isinstance(layer.payload, Dense):
            rank = min(matrix_dims(layer.original_shape))
        else:
            rank = 0
        sums[group] = sums.get(group, 0) + rank
        counts[group] = counts.get(group, 0) + 1
    return {group: sums[group] / counts[group] for group in sorted(sums)}


def compression_report(archive: DeltaArchive) -> dict:
    """Parameter/size accounting, JSON-serializable. Ratio is dense / stored,
    or the string "infinite" when nothing is stored."""
    stats = archive.stats
    per_layer = []
    payload_bytes = 0
    for name, layer in archive.layers.items():
        d, k = matrix_dims(layer.original_shape)
        kind = _layer_kind(layer)
        if isinstance(layer.payload, Factors):
            dense_params = d * k
            stored_params = layer.payload.rank * (d + k)
            rank = layer.payload.rank
        elif isinstance(layer.payload, Dense):
            dense_params = d * k
            stored_params = d * k
            rank = min(d, k)
        else:
            dense_params = 0
            stored_params = 0
            rank = 0
        payload_bytes += stored_params * layer.original_dtype.itemsize
        per_layer.append(
            {
                "layer": name,
                "kind": kind,
                "rank": rank,
                "dense_params": dense_params,
                "stored_params": stored_params,
                "original_shape": list(layer.original_shape),
                "dtype": layer.original_dtype.value,
            }
        )
    ratio: float | str
    if stats.stored_param_count == 0:
        ratio = "infinite"
    else:
        ratio = stats.dense_param_count / stats.stored_param_count
    return {
        "tau": stats.tau,
        "dense_param_count": stats.dense_param_count,
        "stored_param_count": stats.stored_param_count,
        "ratio": ratio,
        "estimated_file_bytes": payload_bytes + len(manifest_json(archive)) + 8,
        "mismatch_warnings": stats.mismatch_warnings,
        "per_layer": per_layer,
    }


def ssim(x, y, dynamic_range: float) -> float:
    """Mean structural similarity over all 8x8 windows (stride 1, uniform
    weights, population (co)variances)."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionMismatch("ssim expects 2-D matrices")
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
    if dynamic_range <= 0.0:
        raise ValueError("dynamic_range must be positive")
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise WindowTooLarge(
            f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2

    win = (SSIM_WINDOW, SSIM_WINDOW)
    wa = sliding_window_view(a, win)
    wb = sliding_window_view(b, win)
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa * wa).mean(axis=(-2, -1)) - mu_a * mu_a
    var_b = (wb * wb).mean(axis=(-2, -1)) - mu_b * mu_b
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))
