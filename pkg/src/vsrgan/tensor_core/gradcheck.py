"""Central finite-difference gradient checker."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, point, h=1e-5, coords=None):
    """Central differences of scalar ``f`` at ``point``.

    ``coords`` restricts the probe to a list of flat indices; the result is
    then a vector aligned with ``coords``.
    """
    x = np.array(point, dtype=np.float64)
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    out = []
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite function value near coordinate {i}")
        out.append((fp - fm) / (2.0 * h))
    out = np.array(out)
    return out.reshape(x.shape) if coords is None else out


def gradient_check(f, point, h=1e-5, coords=None):
    """Max relative error between the analytic and central-difference gradient.

    ``f(x)`` must return ``(value, grad)`` with ``grad`` shaped like ``x``.
    The error per coordinate is ``|a - n| / max(|a|, |n|, 1e-12)``.
    """
    x = np.array(point, dtype=np.float64)
    value, grad = f(x)
    if not np.isfinite(value):
        raise NumericError("non-finite function value at the check point")
    grad = np.asarray(grad, dtype=np.float64)
    numeric = numeric_gradient(lambda z: f(z)[0], x, h, coords)
    analytic = grad if coords is None else grad.reshape(-1)[list(coords)]
    if analytic.size == 0:
        return 0.0
    return float(relative_error(analytic, numeric).max())
