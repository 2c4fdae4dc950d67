"""Error taxonomy shared by the whole package.

Every error carries a stable ``code`` (its class name) so the CLI can emit
structured error documents and foreign bindings can map errors 1:1.
"""


class DsvdError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- container format ---

class MalformedHeader(DsvdError):
    """Container header is structurally invalid (length, JSON, offsets)."""


class UnsupportedDtype(DsvdError):
    """Tensor dtype tag outside the supported set."""


class DuplicateName(DsvdError):
    """Two tensors share one name."""


class IoFailure(DsvdError):
    """Underlying filesystem read/write failed."""


# --- linear algebra ---

class ConvergenceFailure(DsvdError):
    """SVD iteration did not converge; no result is returned."""


class DimensionMismatch(DsvdError):
    """Operands have incompatible shapes."""


# --- rank selection / compression ---

class ZeroEnergy(DsvdError):
    """Total singular-value mass is below the zero threshold."""


class InvalidTau(DsvdError):
    """Energy threshold outside (0, 1]."""


class LayerSetMismatch(DsvdError):
    """A layer name is present in only one of the two checkpoints."""


class ShapeMismatch(DsvdError):
    """Same layer name, different tensor shape."""


class DtypeMismatch(DsvdError):
    """Same layer name and shape, different storage dtype."""


class FingerprintMismatch(DsvdError):
    """Base checkpoint does not match the fingerprint in the archive."""


# --- archive format ---

class MissingManifest(DsvdError):
    """Archive metadata lacks a readable manifest."""


class ManifestTensorMismatch(DsvdError):
    """Manifest and stored tensors disagree."""


class UnsupportedFormatVersion(DsvdError):
    """Archive was written by an incompatible format version."""


# --- analysis ---

class NoSharedLayers(DsvdError):
    """The two checkpoints have no comparable layers."""


class WindowTooLarge(DsvdError):
    """Image smaller than the SSIM window."""
