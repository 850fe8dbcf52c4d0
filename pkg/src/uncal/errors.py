"""Exception types shared across the package."""


class UncalError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(UncalError, ValueError):
    """A function argument violates its documented preconditions."""


class InvalidConfigError(UncalError, ValueError):
    """A configuration value is out of its valid range or unknown."""


class TrainingFailureError(UncalError, RuntimeError):
    """Training diverged (non-finite loss); carries the failing step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")


class FitFailureError(UncalError, RuntimeError):
    """Scaler fitting produced a non-finite objective; carries the iteration."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"scaler fit failed at iteration {iteration}")


class ArchiveFormatError(UncalError, ValueError):
    """A logit archive file is malformed; carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")
