"""Exception types shared across the package."""


class MimoAeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(MimoAeError):
    """Invalid or inconsistent configuration values."""


class DimensionError(MimoAeError):
    """Array shapes do not match the operation's contract."""


class SingularMatrixError(MimoAeError):
    """A linear system is singular to working precision."""


class TrainingError(MimoAeError):
    """Autoencoder training hit a non-finite state.

    Carries a ``diagnostics`` dict (epoch, loss, gradient norm) for
    post-mortem inspection.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AdmmDivergenceError(MimoAeError):
    """Consensus residual grew far beyond its initial value."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MalformedFrame(MimoAeError):
    """A wire frame failed validation during deserialization."""

    def __init__(self, reason):
        super().__init__(f"malformed frame: {reason}")
        self.reason = reason
