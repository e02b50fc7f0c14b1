"""Exception types shared across the package."""


class RankpoolError(Exception):
    """Base class for all rankpool errors."""


class DimensionError(RankpoolError, ValueError):
    """Array shapes or binnings do not satisfy an operation's contract."""


class NumericError(RankpoolError, ValueError):
    """Non-finite values where finite ones are required."""


class DegenerateLabelsError(RankpoolError, ValueError):
    """Fewer than two classes, or a class with no instances."""


class DegenerateProjectionError(RankpoolError, ValueError):
    """Projected data carries no between-class energy."""


class EstimationError(RankpoolError, ValueError):
    """Density estimation received unusable input (e.g. no samples)."""


class DataFormatError(RankpoolError, ValueError):
    """A dataset file does not match its declared binary format."""


class ConfigError(RankpoolError, ValueError):
    """An experiment config file could not be parsed or validated."""
