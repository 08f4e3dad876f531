"""Exception hierarchy shared by every seasoncast module."""


class SeasoncastError(Exception):
    """Base class for all library errors."""


class ConfigError(SeasoncastError):
    """Invalid or unsupported configuration."""


class ConfigMismatch(ConfigError):
    """Checkpoint config hash differs from the runtime config."""


class DataError(SeasoncastError):
    """Input data is malformed or insufficient."""


class DimensionMismatch(SeasoncastError, ValueError):
    pass


class WindowTooShort(SeasoncastError, ValueError):
    pass


class TooFewMembers(DataError):
    pass


class EmptySeries(DataError):
    pass


class WindowError(DataError):
    """A feature window cannot be built at the requested time index."""

    cause = "window_error"


class InsufficientHistory(WindowError):
    cause = "insufficient_history"


class InsufficientForecast(WindowError):
    cause = "insufficient_forecast"


class MissingValue(WindowError):
    cause = "missing_value"


class NoForecastVintage(WindowError):
    cause = "no_forecast_vintage"


class DegenerateSplit(DataError):
    pass


class InvalidQuantile(SeasoncastError, ValueError):
    pass


class NonFiniteLoss(SeasoncastError, ArithmeticError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value


class AllTargetsNearZero(SeasoncastError, ValueError):
    pass


class HorizonMismatch(SeasoncastError, ValueError):
    pass


class ZeroBaseMetric(SeasoncastError, ZeroDivisionError):
    pass


class KeyMismatch(SeasoncastError, KeyError):
    pass
