"""Exception hierarchy and exit-code handlers."""

import sys
from typing import Callable, Dict, Type

import click
from pydantic import ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_SELFCHECK = 3


class HatkitError(Exception):
    """Root of every error raised by hatkit."""


class NumericsError(HatkitError, ValueError):
    pass


class LatticeError(HatkitError, ValueError):
    pass


class OracleLimitError(LatticeError):
    pass


class LabelError(HatkitError, ValueError):
    """A token id outside 1..|V|."""


class MwerError(HatkitError, ValueError):
    pass


class DecodeError(HatkitError):
    pass


class LmError(HatkitError, ValueError):
    pass


class ModelError(HatkitError, ValueError):
    pass


class SynthError(HatkitError, ValueError):
    pass


class TrainingDivergedError(HatkitError):
    def __init__(self, message: str, epoch: int, utt_id: str = ""):
        super().__init__(message)
        self.epoch = epoch
        self.utt_id = utt_id


class StorageError(HatkitError, ValueError):
    pass


class EvalError(HatkitError, ValueError):
    pass


class UsageError(HatkitError):
    """Invalid command-line usage or unmet command precondition."""


class SelfcheckFailed(HatkitError):
    def __init__(self, failed: list):
        super().__init__(f"{len(failed)} selfcheck(s) failed: {', '.join(failed)}")
        self.failed = failed


def _report(exc: BaseException) -> None:
    print(f"error: {exc}", file=sys.stderr)


def usage_error_handler(exc: BaseException) -> int:
    """Handle bad flags, bad config files and unmet preconditions."""
    if isinstance(exc, click.ClickException):
        exc.show(file=sys.stderr)
    else:
        _report(exc)
    return EXIT_USAGE


def selfcheck_error_handler(exc: BaseException) -> int:
    """Handle a failed oracle suite."""
    _report(exc)
    return EXIT_SELFCHECK


def runtime_error_handler(exc: BaseException) -> int:
    """Handle failures raised while a command was doing its work."""
    _report(exc)
    return EXIT_RUNTIME


# Ordered: the first matching type wins.
ERROR_HANDLERS: Dict[Type[BaseException], Callable[[BaseException], int]] = {
    SelfcheckFailed: selfcheck_error_handler,
    UsageError: usage_error_handler,
    click.UsageError: usage_error_handler,
    click.BadParameter: usage_error_handler,
    ValidationError: usage_error_handler,
    HatkitError: runtime_error_handler,
    Exception: runtime_error_handler,
}


def handle_error(exc: BaseException) -> int:
    """Map an exception to its exit code, printing the message to stderr."""
    for exc_type, handler in ERROR_HANDLERS.items():
        if isinstance(exc, exc_type):
            return handler(exc)
    return runtime_error_handler(exc)
