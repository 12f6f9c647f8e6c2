import json
import logging
from numbers import Real
from typing import Any

import numpy as np

LOGGER_NAME = "ifdm"

# Attributes every LogRecord carries; anything else arrived through `extra`.
_RECORD_FIELDS = frozenset(vars(logging.LogRecord("", 0, "", 0, "", None, None))) | {"message", "asctime"}


def get_logger() -> logging.Logger:
    return logging.getLogger(LOGGER_NAME)


def configure_logging(level: str = "INFO", structured: bool = False) -> None:
    """
    Configure the `ifdm` logger.

    Structured runs (production or `--json-logs`) emit one JSON object per
    record, otherwise records are rendered for a terminal.

    Args:
        level: Log level name
        structured: Use the JSON formatter
    """
    logger = get_logger()
    if logger.hasHandlers():
        logger.handlers.clear()

    handler = logging.StreamHandler()
    if structured:
        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(DevFormatter(fmt="%(asctime)s [%(levelname)s] %(name)s: %(message)s"))

    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False


def record_extras(record: logging.LogRecord) -> dict[str, Any]:
    return {key: value for key, value in vars(record).items() if key not in _RECORD_FIELDS}


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays (possibly nested in containers) to plain JSON values."""
    if isinstance(value, np.ndarray):
        return value.tolist() if value.size <= 64 else f"<array shape={value.shape} dtype={value.dtype}>"
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if value is None or isinstance(value, (str, bool, int, float)):
        return value
    return repr(value)


class JsonFormatter(logging.Formatter):
    """One JSON object per record, extras included"""

    def format(self, record: logging.LogRecord) -> str:  # noqa: D401
        entry: dict[str, Any] = {
            "timestamp": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        for key, value in record_extras(record).items():
            entry[key] = to_jsonable(value)
        return json.dumps(entry, allow_nan=True)


def _short(value: Any) -> str:
    if isinstance(value, Real) and not isinstance(value, (bool, int, np.integer)):
        return f"{float(value):.6g}"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k}={_short(v)}" for k, v in value.items()) + "}"
    return str(value)


class DevFormatter(logging.Formatter):
    """Terminal formatter; extras are appended as key=value with floats shortened."""

    def format(self, record: logging.LogRecord) -> str:  # noqa: D401
        base = super().format(record)
        extras = record_extras(record)
        extras.pop("message_text", None)
        if "error_text" in extras:
            extras["error"] = extras.pop("error_text")
        if not extras:
            return base
        return base + " | " + " ".join(f"{key}={_short(value)}" for key, value in extras.items())


def log_event(message: str | None = None, data: object | None = None, event_type: str | None = None, **kwargs) -> None:
    """
    Log an informational event with structured fields.

    Usage:
    - log_event("snapshot written")
    - log_event("optimizer iteration", {"iter": 3, "S": 1.2e-9}, event_type="dual.iteration")
    - log_event(data=report)
    """
    extra: dict[str, Any] = {"event_type": event_type or "event", **kwargs}
    if message is not None:
        extra["message_text"] = message
    if data is not None:
        extra["data"] = data
    text = message if message is not None else repr(data) if data is not None else ""
    get_logger().info(text, extra=extra)


def log_error(
    message: str | None = None,
    error: Exception | str | None = None,
    *,
    error_type: str | None = None,
    exc_info: BaseException | None = None,
    **kwargs,
) -> None:
    """
    Log an error. Either the message or the error may be omitted.

    Tracebacks are attached only when `exc_info` is given; mapping failures and
    CFL violations are expected outcomes of a run.
    """
    if error_type is None:
        error_type = type(error).__name__ if isinstance(error, BaseException) else "error"
    error_text = None if error is None else error if isinstance(error, str) else str(error)

    extra: dict[str, Any] = {"error_type": error_type, **kwargs}
    if message is not None:
        extra["message_text"] = message
    if error_text is not None:
        extra["error_text"] = error_text

    trace = (type(exc_info), exc_info, exc_info.__traceback__) if exc_info is not None else None
    get_logger().error(message if message is not None else error_text or "", extra=extra, exc_info=trace)
