"""
Exception hierarchy for the OSSDM simulator
Every category maps to a CLI exit code
"""
from typing import Optional

import config


class OssdmError(Exception):
    """Base class for all simulator errors"""

    exit_code = config.EXIT_RUNTIME


class ConfigurationError(OssdmError):
    exit_code = config.EXIT_CONFIG


class LaunchError(OssdmError):
    exit_code = config.EXIT_CONFIG


class ArgumentError(OssdmError):
    exit_code = config.EXIT_USAGE


class DimensionError(OssdmError):
    exit_code = config.EXIT_NUMERIC


class OrderingError(OssdmError):
    exit_code = config.EXIT_USAGE


class BoundsError(OssdmError):
    exit_code = config.EXIT_USAGE


class StateError(OssdmError):
    pass


class CapacityError(OssdmError):
    exit_code = config.EXIT_CONFIG


class FramingError(OssdmError):
    exit_code = config.EXIT_NUMERIC


class PaddingError(FramingError):
    pass


class GenerationError(OssdmError):
    pass


class InfeasibleError(OssdmError):
    exit_code = config.EXIT_CONFIG


class EncodingError(OssdmError):
    exit_code = config.EXIT_DATA


class DecodeError(OssdmError):
    exit_code = config.EXIT_DATA


class FormatError(OssdmError):
    exit_code = config.EXIT_DATA


class SnrError(OssdmError):
    exit_code = config.EXIT_NUMERIC


class SingularChannelError(OssdmError):
    exit_code = config.EXIT_NUMERIC


class EstimatorError(OssdmError):
    exit_code = config.EXIT_NUMERIC


class TrainingError(OssdmError):
    """Raised when training diverges"""

    exit_code = config.EXIT_NUMERIC

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message if epoch is None else f"{message} (epoch {epoch})")
        self.epoch = epoch
