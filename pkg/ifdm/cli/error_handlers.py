"""
Exit-code mapping for CLI commands.

Commands raise; this module is the single place that turns exceptions into
log records and process exit codes.
"""

from __future__ import annotations

from typing import Any, Callable

from pydantic import ValidationError

from ..logging import log_error
from ..utils.exceptions import (
    BaseStateMissingError,
    ConfigError,
    IfdmError,
    NumericalAbortError,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def exit_code_for(err: BaseException) -> int:
    if isinstance(err, (ConfigError, BaseStateMissingError, ValidationError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(err, NumericalAbortError):
        return EXIT_NUMERICAL
    if isinstance(err, IfdmError):
        return err.exit_code
    return EXIT_FAILURE


def run_command(command: Callable[..., int], *args: Any, **kwargs: Any) -> int:
    """Run a command and translate any escaping exception into its exit code."""
    try:
        return command(*args, **kwargs)
    except ConfigError as e:
        log_error("invalid configuration", e, line=e.line)
        return exit_code_for(e)
    except BaseStateMissingError as e:
        log_error("base state missing", e, path=e.path)
        return exit_code_for(e)
    except NumericalAbortError as e:
        log_error("numerical abort", e, time=e.time)
        return exit_code_for(e)
    except IfdmError as e:
        log_error("command failed", e)
        return exit_code_for(e)
    except (ValidationError, FileNotFoundError) as e:
        log_error("invalid input", e)
        return exit_code_for(e)
    except Exception as e:
        log_error("unexpected error", e, exc_info=e)
        return EXIT_FAILURE
