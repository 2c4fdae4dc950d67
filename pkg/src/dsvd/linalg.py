"""Dense double-precision linear algebra: thin SVD, products, norms, cosine.

The SVD is LAPACK-backed and post-processed to a reproducible form: singular
values below 1e-14 * sigma_1 are clamped to exactly zero, and each singular
pair is sign-normalized so the largest-magnitude entry of the u-column is
non-negative (ties broken by lowest row index). Two calls on identical input
yield bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch

SIGMA_CLAMP_REL = 1e-14


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD factors: u (d x r), sigma (r, descending), vt (r x k)."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        """Number of nonzero singular values (after clamping)."""
        return int(np.count_nonzero(self.sigma))


def _check_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def svd(m) -> SvdResult:
    """Thin SVD with deterministic sign convention and tiny-sigma clamping."""
    a = _check_matrix(m)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    if s.size and s[0] > 0.0:
        s = np.where(s < SIGMA_CLAMP_REL * s[0], 0.0, s)
    # argmax on |u| picks the lowest row index among ties
    lead = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[lead, np.arange(u.shape[1])] < 0.0, -1.0, 1.0)
    u = u * signs
    vt = vt * signs[:, np.newaxis]
    return SvdResult(u=u, sigma=s, vt=vt)


def matmul(a, b) -> np.ndarray:
    x = _check_matrix(a, "a")
    y = _check_matrix(b, "b")
    if x.shape[1] != y.shape[0]:
        raise DimensionMismatch(
            f"cannot multiply {x.shape[0]}x{x.shape[1]} by {y.shape[0]}x{y.shape[1]}"
        )
    return x @ y


def frobenius_norm(m) -> float:
    a = _check_matrix(m)
    return float(np.linalg.norm(a, "fro"))


def cosine_similarity(a, b) -> float:
    """dot(flat(a), flat(b)) / (|a| * |b|); 0 if exactly one side is zero, 1 if both."""
    x = _check_matrix(a, "a")
    y = _check_matrix(b, "b")
    if x.shape != y.shape:
        raise DimensionMismatch(f"shape {x.shape} vs {y.shape}")
    xf = x.ravel()
    yf = y.ravel()
    nx = float(np.linalg.norm(xf))
    ny = float(np.linalg.norm(yf))
    if nx == 0.0 and ny == 0.0:
        return 1.0
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(xf, yf) / (nx * ny))
