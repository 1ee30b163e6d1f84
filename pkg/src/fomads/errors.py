"""Exception types shared across the package.

The CLI maps these onto process exit codes: config errors exit 2, data
errors exit 3, training divergence exits 4.
"""


class FomadsError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(FomadsError, ValueError):
    """Invalid configuration value or malformed config/CLI input."""


class DataError(FomadsError, ValueError):
    """Malformed or non-finite data encountered while processing."""


class TrainingError(FomadsError, RuntimeError):
    """Training diverged (non-finite loss or gradients)."""
