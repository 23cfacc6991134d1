"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error the engine raises on purpose."""


class DataValidationError(EngineError):
    """Malformed or inconsistent input data.

    ``line`` is the 1-based line number in the source CSV when known
    (header counts as line 1).
    """

    def __init__(self, message: str, *, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigValidationError(EngineError):
    """One or more invalid configuration values; collects all messages."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))


class InsufficientDataError(EngineError):
    """Not enough history to satisfy a window or period requirement."""


class InsufficientUniverseError(EngineError):
    """Fewer eligible assets than the requested universe size."""

    def __init__(self, date: str, requested: int, eligible: int):
        super().__init__(
            f"universe at {date}: requested {requested} assets "
            f"but only {eligible} are eligible"
        )
        self.date = date
        self.requested = requested
        self.eligible = eligible


class SolverError(EngineError):
    """Numerical solver failure."""


class NotPositiveDefiniteError(SolverError):
    """Quadratic form found to lack positive definiteness.

    ``model_kind`` names the risk model whose covariance triggered the
    failure so the backtest can map it to the documented NaN outcome.
    """

    def __init__(self, message: str, *, model_kind: str | None = None):
        if model_kind:
            message = f"{message} (risk model: {model_kind})"
        super().__init__(message)
        self.model_kind = model_kind


class DegenerateSolutionError(SolverError):
    """Optimizer returned a solution that cannot be normalized."""


class StrategyError(EngineError):
    """Portfolio construction failed; wraps solver status with context."""


class SharpeUndefinedError(EngineError):
    """Zero return variance makes the Sharpe ratio undefined."""
