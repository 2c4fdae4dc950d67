"""Delta compression for fine-tuned checkpoints via per-layer truncated SVD
with energy-based adaptive rank selection."""

__version__ = "0.1.0"

from .analysis import (
    LayerGroupSpec,
    SimilarityReport,
    compression_report,
    layer_similarity_report,
    rank_table,
    ssim,
)
from .archive import load_archive, save_archive
from .delta import (
    CompressedLayer,
    CompressionStats,
    Dense,
    DeltaArchive,
    EnergyProfile,
    Factors,
    MismatchPolicy,
    Unchanged,
    compress_checkpoint,
    compute_delta,
    cumulative_energy,
    factorize_layer,
    reconstruct_checkpoint,
    select_rank,
)
from .errors import DsvdError
from .linalg import SvdResult, cosine_similarity, frobenius_norm, matmul, svd
from .tensor_store import (
    Checkpoint,
    Dtype,
    TensorRecord,
    as_matrix,
    fingerprint,
    read_checkpoint,
    write_checkpoint,
)

__all__ = [
    "Checkpoint",
    "CompressedLayer",
    "CompressionStats",
    "Dense",
    "DeltaArchive",
    "DsvdError",
    "Dtype",
    "EnergyProfile",
    "Factors",
    "LayerGroupSpec",
    "MismatchPolicy",
    "SimilarityReport",
    "SvdResult",
    "TensorRecord",
    "Unchanged",
    "__version__",
    "as_matrix",
    "compress_checkpoint",
    "compression_report",
    "compute_delta",
    "cosine_similarity",
    "cumulative_energy",
    "factorize_layer",
    "fingerprint",
    "frobenius_norm",
    "layer_similarity_report",
    "load_archive",
    "matmul",
    "rank_table",
    "read_checkpoint",
    "reconstruct_checkpoint",
    "save_archive",
    "select_rank",
    "ssim",
    "svd",
    "write_checkpoint",
]
