"""Exception types raised across the engine."""


class TexforgeError(Exception):
    """Base class for all engine errors."""


class ParseError(TexforgeError):
    """Mesh file is malformed."""


class NonTriangulated(TexforgeError):
    """Mesh contains polygon faces that cannot be fan-triangulated."""


class TooManyFaces(TexforgeError):
    """Fallback UV charting cannot fit every face at the target atlas resolution."""


class DegenerateTriangle(TexforgeError):
    """A zero-area face makes cotangent weights undefined."""


class ConvergenceFailure(TexforgeError):
    """Eigensolver did not converge within its iteration budget."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class FlippedFaces(TexforgeError):
    """A deformation inverted face orientations even after magnitude back-off."""


class EmptyForeground(TexforgeError):
    """A rendered view covers no pixels."""


class BackendError(TexforgeError):
    """A denoiser backend call failed."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class ScheduleMismatch(TexforgeError):
    """Sampling schedule step count differs from the backend's."""


class ResolutionMismatch(TexforgeError):
    """Two images that must share a resolution do not."""


class ConfigError(TexforgeError):
    """Invalid run configuration or CLI arguments."""


class MissingUVWarning(UserWarning):
    """Mesh arrived without UVs; fallback charting will be used."""
