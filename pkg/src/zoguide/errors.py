class ZOError(Exception):
    """Base class for errors raised by zoguide."""


class ConfigError(ZOError, ValueError):
    """Invalid optimizer, problem or run configuration."""


class NumericOverflowError(ZOError, ArithmeticError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"non-finite parameter {value!r} at index {index}")


class EstimationError(ZOError, ArithmeticError):
    """A loss evaluation used by an estimator was not finite."""

    def __init__(self, message: str, losses=()):
        self.losses = tuple(losses)
        super().__init__(f"{message}: losses={self.losses}")


class TraceIOError(ZOError, OSError):
    def __init__(self, path, cause: Exception):
        self.path = str(path)
        super().__init__(f"{self.path}: {cause}")
