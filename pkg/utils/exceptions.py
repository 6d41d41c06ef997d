"""Exception hierarchy shared by kernels, services and the CLI."""


class CbfError(Exception):
    """Base class for every error raised by this package."""


class GridMismatchError(CbfError):
    """Operands live on different grids, or an array does not match its grid."""


class InvalidFieldError(CbfError):
    """Field data violates its type invariants (finite, shaped, conjugate-symmetric)."""


class ParameterError(CbfError):
    """Invalid physical parameters, exponent, weights or optimizer settings."""


class AlignmentError(CbfError):
    """A time series is not aligned with the solver time grid."""


class BlowupError(CbfError):
    """The state became non-finite or exceeded the blow-up threshold."""

    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


class MonotonicityPreconditionError(CbfError):
    """A monotonicity check was requested outside the regime where it applies."""


class CheckpointError(CbfError):
    """A state could not be reconstructed from the stored checkpoints."""


class FieldFormatError(CbfError):
    """A field file has a bad header or a truncated payload."""


class ConfigError(CbfError):
    """A run document failed validation; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))
