"""Bicubic resampling compatible with MATLAB's ``imresize``.

Separable: each axis is resampled by a dense (out x in) weight matrix.
Downscaling with antialiasing stretches the cubic kernel by 1/scale.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError


def cubic_kernel(x):
    """Keys cubic convolution kernel with a = -0.5."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    out = np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))
    return out if out.ndim else float(out)


def _map_border(idx, n, border):
    if border == "replicate":
        return np.clip(idx, 0, n - 1)
    if border == "symmetric":
        aux = np.concatenate([np.arange(n), np.arange(n - 1, -1, -1)])
        return aux[np.mod(idx, 2 * n)]
    raise ConfigError(f"unknown border mode {border!r}")


def contributions(in_len, out_len, antialias=True, border="symmetric"):
    """Source indices and normalized weights for every output sample.

    Returns ``(indices, weights)``, both shaped (out_len, taps). Indices are
    already mapped into ``[0, in_len)``.
    """
    if in_len < 1 or out_len < 1:
        raise ConfigError(f"resize extents must be >= 1, got {in_len} -> {out_len}")
    scale = out_len / in_len
    u = (np.arange(out_len) + 0.5) / scale - 0.5
    if scale < 1.0 and antialias:
        width = 4.0 / scale

        def kernel(d):
            return scale * cubic_kernel(scale * d)
    else:
        width = 4.0
        kernel = cubic_kernel
    left = np.floor(u - width / 2.0).astype(np.int64)
    taps = int(np.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = kernel(u[:, None] - idx)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return _map_border(idx, in_len, border), weights


def resize_matrix(in_len, out_len, antialias=True, border="symmetric"):
    """Dense (out_len, in_len) matrix form of :func:`contributions`."""
    idx, weights = contributions(in_len, out_len, antialias, border)
    mat = np.zeros((out_len, in_len))
    rows = np.repeat(np.arange(out_len), idx.shape[1])
    np.add.at(mat, (rows, idx.ravel()), weights.ravel())
    return mat


def _resample_last_axis(img, idx, weights):
    # anchor + sum w * (x - anchor): equal to sum w * x because the weights
    # sum to one, but constants and kernel nodes come out bit-exact
    anchor_idx = idx[np.arange(idx.shape[0]), np.argmax(weights, axis=1)]
    anchor = img[..., anchor_idx]
    gathered = img[..., idx] - anchor[..., None]
    return anchor + np.einsum("...ot,ot->...o", gathered, weights)


def imresize_bicubic(image, out_h, out_w, antialias=True, border="symmetric"):
    """Resize the trailing two axes of ``image`` to ``(out_h, out_w)``.

    Rows are resampled first, then columns. ``border`` is ``"symmetric"``
    (mirror, as MATLAB does) or ``"replicate"`` (clamp to the edge pixel).
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[-2:]
    idx_h, w_h = contributions(h, out_h, antialias, border)
    idx_w, w_w = contributions(w, out_w, antialias, border)
    tmp = _resample_last_axis(np.swapaxes(img, -1, -2), idx_h, w_h)
    return _resample_last_axis(np.swapaxes(tmp, -1, -2), idx_w, w_w)
