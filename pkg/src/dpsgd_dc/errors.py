"""Exception hierarchy shared by every module.

The CLI maps ``ParameterError`` (and its subclasses) to exit code 2 and any
other ``DPSGDError`` to exit code 1.
"""


class DPSGDError(Exception):
    """Base class for all package errors."""


class ParameterError(DPSGDError, ValueError):
    """An argument is outside its documented domain."""


class PreconditionError(ParameterError):
    """A closed-form result is requested outside the regime it is valid in."""


class ConfigurationError(ParameterError):
    """A configuration file or experiment setup cannot be honoured."""


class CalibrationError(DPSGDError):
    """Noise calibration could not reach the requested privacy target."""
