"""
Exception types for the optimization toolkit.
Commands map these to process exit codes.
"""


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class InvalidInputError(ToolkitError, ValueError):
    """Malformed input or a violated precondition."""

    exit_code = 2


class ConvergenceError(ToolkitError, RuntimeError):
    """A solver hit its iteration cap before meeting its stopping rule."""

    exit_code = 3


class CertificateError(ConvergenceError):
    """An adaptive method exhausted its inner attempts.

    Usually the declared model constants are wrong or the objective
    evaluation is inconsistent with the model.
    """
