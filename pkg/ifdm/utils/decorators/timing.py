'''
This module defines the `get_time` decorator.

Commands are wrapped with it so every run logs its wall time, including runs
that end in an exception.
'''
from functools import wraps
from time import perf_counter
from typing import Any, Callable

from ...logging import log_event


def get_time(func: Callable) -> Callable:
    """
    Log the wall time of each call to `func` as a `timing` event.

    The event carries `elapsed` in seconds and `ok`, which is False when the
    call raised.
    """
    @wraps(func)
    def wrapper(*args, **kwargs) -> Any:
        start = perf_counter()
        ok = False
        try:
            result = func(*args, **kwargs)
            ok = True
            return result
        finally:
            elapsed = perf_counter() - start
            log_event(
                f"{func.__name__} finished in {elapsed:.3f} s",
                event_type="timing",
                elapsed=elapsed,
                ok=ok,
            )

    return wrapper
