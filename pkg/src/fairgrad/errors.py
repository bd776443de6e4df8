"""Exception hierarchy shared across the package."""


class ContractError(ValueError):
    """An operation was called with inputs violating its preconditions."""


class UndefinedRateError(ContractError):
    """A (class, group) cell is empty, so a group rate cannot be computed."""


class UndefinedMetricError(ContractError):
    """A metric is undefined for the given inputs (e.g. AUC on one class)."""


class DataLoadError(ValueError):
    """A dataset file or schema could not be parsed."""


class ConfigError(ValueError):
    """Invalid training or run configuration."""


class TrainingError(RuntimeError):
    """Training produced non-finite parameters."""
