"""Federated long-tailed learning with adaptive logit adjustment, trainable
class centers and feature decorrelation, simulated on a single process."""

from fedlf.errors import ConfigError, FormatError, InputError, NumericError

__version__ = "0.1.0"

__all__ = ["ConfigError", "FormatError", "InputError", "NumericError", "__version__"]
