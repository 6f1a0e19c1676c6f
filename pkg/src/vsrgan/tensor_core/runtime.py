"""Deterministic execution mode.

The kernels already use a fixed reduction order; the remaining source of
run-to-run variation is a multi-threaded BLAS, which deterministic mode pins
to a single thread.
"""

from __future__ import annotations

import contextlib

from threadpoolctl import threadpool_limits

_limiter = None


def set_deterministic(enabled=True):
    global _limiter
    if enabled and _limiter is None:
        _limiter = threadpool_limits(limits=1)
    elif not enabled and _limiter is not None:
        _limiter.restore_original_limits()
        _limiter = None


def is_deterministic():
    return _limiter is not None


@contextlib.contextmanager
def deterministic():
    was = is_deterministic()
    set_deterministic(True)
    try:
        yield
    finally:
        if not was:
            set_deterministic(False)
