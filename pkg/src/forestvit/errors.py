"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class NumericError(ValueError):
    """Input outside the numeric domain of an operation (NaN/Inf, log of 0...)."""


class ContractError(ValueError):
    """A caller violated an operation's contract (non-scalar loss, empty input...)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DataError(RuntimeError):
    """Dataset content or layout problem."""


class FormatError(DataError):
    """A file exists but cannot be decoded or parsed."""


class IterationError(RuntimeError):
    """An iterative solver produced a non-finite state."""
