"""Exception hierarchy shared by all qsf modules.

The CLI maps these onto its exit-code contract: usage/configuration
problems exit 1, data and I/O problems exit 2, training aborts exit 3.
"""


class QsfError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QsfError):
    """Invalid configuration: bad shapes, out-of-range settings, unknown keys."""


class DataError(QsfError):
    """Malformed or inconsistent input data (CSV contents, window sizes, ...)."""


class StateError(QsfError):
    """Operation attempted in an invalid state, e.g. transform without a fitted scaler."""


class TrainingError(QsfError):
    """Training aborted: non-finite loss or gradients."""
