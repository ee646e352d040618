"""Exception taxonomy shared by the whole package.

The CLI maps these onto process exit codes: validation problems exit 2,
numerical failures exit 3, file/format problems exit 4.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class ShapeError(ValidationError):
    """Array dimensions are inconsistent with the operation's contract."""


class WindowError(ValidationError):
    """Sliding window produces an empty output grid."""


class TpsFitError(ValidationError):
    """Thin-plate-spline system is degenerate (collinear/duplicate points)."""


class NumericalError(ArithmeticError):
    """A computation produced or encountered non-finite values."""


class TensorFileError(IOError):
    """Binary tensor file is corrupt: bad magic, version, or payload size."""


class StageError(RuntimeError):
    """Pipeline stage failed; carries the stage name and the original cause."""

    def __init__(self, stage, cause, fingerprints=None):
        self.stage = stage
        self.cause = cause
        self.fingerprints = dict(fingerprints or {})
        detail = f"pipeline stage '{stage}' failed: {cause}"
        if self.fingerprints:
            tags = ", ".join(f"{k}={v[:12]}" for k, v in sorted(self.fingerprints.items()))
            detail += f" [inputs: {tags}]"
        super().__init__(detail)
