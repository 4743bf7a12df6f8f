"""Exception hierarchy shared by every module in the package."""


class LightFFDError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(LightFFDError, ValueError):
    pass


class NumericError(LightFFDError, ArithmeticError):
    """Raised when a computation produces or receives non-finite values."""


class DegenerateBatchError(LightFFDError, ValueError):
    pass


class InvalidLabelError(LightFFDError, ValueError):
    pass


class UnknownArchitectureError(LightFFDError, ValueError):
    pass


class CheckpointCorruptError(LightFFDError):
    pass


class DatasetLayoutError(LightFFDError):
    pass


class SplitInfeasibleError(LightFFDError, ValueError):
    pass


class DecodeError(LightFFDError):
    def __init__(self, path, reason=""):
        self.path = str(path)
        msg = f"cannot decode image {self.path}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DivergedTrainingError(LightFFDError):
    def __init__(self, iteration, loss):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at iteration {iteration}")
