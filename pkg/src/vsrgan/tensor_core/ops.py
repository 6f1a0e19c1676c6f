"""Functional layer kernels: forward and hand-wired backward passes.

Every kernel works on float64 numpy arrays laid out as (batch, channels,
height, width). Kernels are pure: state such as batch-norm running
statistics is passed in and returned, never mutated.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatchError, ShapeError

DTYPE = np.float64


def _require_rank(name, arr, rank):
    if arr.ndim != rank:
        raise ShapeError(f"{name}: expected rank {rank}, got shape {arr.shape}")


def conv_output_size(size, k, stride, pad):
    out = (size + 2 * pad - k) // stride + 1
    if out < 1:
        raise ShapeError(
            f"non-positive output extent for size={size}, kernel={k}, "
            f"stride={stride}, pad={pad}"
        )
    return out


def _check_conv_args(x, weight, bias, stride, pad):
    _require_rank("conv2d input", x, 4)
    _require_rank("conv2d weight", weight, 4)
    cout, cin, kh, kw = weight.shape
    if x.shape[1] != cin:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels, weight expects {cin}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel extents must be odd, got {(kh, kw)}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({cout},)")
    if stride < 1 or pad < 0:
        raise ShapeError(f"conv2d: invalid stride={stride} / pad={pad}")
    h_out = conv_output_size(x.shape[2], kh, stride, pad)
    w_out = conv_output_size(x.shape[3], kw, stride, pad)
    return h_out, w_out


def _pad(x, pad):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _windows(xp, kh, kw, stride, h_out, w_out):
    # (B, C, H', W', kh, kw) strided view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (h_out - 1) * stride + 1 : stride, : (w_out - 1) * stride + 1 : stride]


def conv2d_naive(x, weight, bias=None, stride=1, pad=0):
    """Reference convolution by explicit nested loops.

    Slow; kept as the correctness oracle for :func:`conv2d_forward`.
    """
    h_out, w_out = _check_conv_args(x, weight, bias, stride, pad)
    xp = _pad(x, pad)
    batch = x.shape[0]
    cout, cin, kh, kw = weight.shape
    out = np.zeros((batch, cout, h_out, w_out), dtype=DTYPE)
    for b in range(batch):
        for o in range(cout):
            for i in range(h_out):
                for j in range(w_out):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += weight[o, c, u, v] * xp[b, c, i * stride + u, j * stride + v]
                    out[b, o, i, j] = acc
    return out


# below this reduction length an explicit im2col beats per-tap products
_IM2COL_MAX_K = 32


def _flat_padded(x, pad):
    """Zero-padded input in (C, B*Hp*Wp) layout."""
    b, c, h, w = x.shape
    xp = np.zeros((c, b, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    xp[:, :, pad : pad + h, pad : pad + w] = x.transpose(1, 0, 2, 3)
    return xp.reshape(c, -1), xp.shape


def _tap_offsets(kh, kw, row):
    return [(u, v, u * row + v) for u in range(kh) for v in range(kw)]


def _conv_s1_forward(x, weight, bias, pad, h_out, w_out, xflat=None):
    # Stride 1: output at flat position p of the padded grid is
    # sum_{u,v} W[:, :, u, v] @ X[:, p + u*Wp + v], so every tap is one GEMM
    # over a contiguous slice. Positions outside the valid grid are dropped.
    cout, cin, kh, kw = weight.shape
    if xflat is None:
        xflat, _ = _flat_padded(x, pad)
    b = x.shape[0]
    hp, wp = x.shape[2] + 2 * pad, x.shape[3] + 2 * pad
    n = xflat.shape[1]
    span = n - (kh - 1) * wp - (kw - 1)
    taps = np.ascontiguousarray(weight.transpose(2, 3, 0, 1))  # BLAS needs unit stride
    acc = np.zeros((cout, n), dtype=DTYPE)
    for u, v, off in _tap_offsets(kh, kw, wp):
        acc[:, :span] += taps[u, v] @ xflat[:, off : off + span]
    out = acc.reshape(cout, b, hp, wp)[:, :, :h_out, :w_out].transpose(1, 0, 2, 3)
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1)
    return out


def conv2d_forward(x, weight, bias=None, stride=1, pad=0):
    """2-D cross-correlation with zero padding (fast path).

    Stride 1 runs one matrix product per kernel tap over shifted views of
    the flattened padded input; strided and very thin layers use an
    explicit im2col.
    Summation order is fixed, so results are reproducible bit for bit.
    """
    h_out, w_out = _check_conv_args(x, weight, bias, stride, pad)
    if stride == 1 and weight[0].size > _IM2COL_MAX_K:
        return _conv_s1_forward(x, weight, bias, pad, h_out, w_out)
    kh, kw = weight.shape[2:]
    win = _windows(_pad(x, pad), kh, kw, stride, h_out, w_out)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, weight[0].size)
    out = cols @ weight.reshape(weight.shape[0], -1).T
    if bias is not None:
        out += bias
    out = out.reshape(x.shape[0], h_out, w_out, -1).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out)


def conv2d_backward(grad_out, x, weight, stride=1, pad=0, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` w.r.t. input, weight and bias.

    Returns ``(grad_input, grad_weight, grad_bias)``; ``grad_input`` is None
    when ``need_input_grad`` is false (first layer of a network).
    """
    h_out, w_out = _check_conv_args(x, weight, None, stride, pad)
    batch = x.shape[0]
    cout, cin, kh, kw = weight.shape
    if grad_out.shape != (batch, cout, h_out, w_out):
        raise ShapeError(
            f"conv2d_backward: grad_out shape {grad_out.shape} != "
            f"{(batch, cout, h_out, w_out)}"
        )
    grad_bias = grad_out.sum(axis=(0, 2, 3))
    if stride == 1 and weight[0].size > _IM2COL_MAX_K:
        return _conv_s1_backward(grad_out, x, weight, pad, need_input_grad) + (grad_bias,)

    win = _windows(_pad(x, pad), kh, kw, stride, h_out, w_out)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, cin * kh * kw)
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, cout)
    grad_weight = (g2.T @ cols).reshape(weight.shape)
    if not need_input_grad:
        return None, grad_weight, grad_bias
    gcols = (g2 @ weight.reshape(cout, -1)).reshape(batch, h_out, w_out, cin, kh, kw)
    hp, wp = x.shape[2] + 2 * pad, x.shape[3] + 2 * pad
    gpad = np.zeros((batch, cin, hp, wp), dtype=DTYPE)
    h_span = (h_out - 1) * stride + 1
    w_span = (w_out - 1) * stride + 1
    for u in range(kh):
        for v in range(kw):
            gpad[:, :, u : u + h_span : stride, v : v + w_span : stride] += gcols[
                :, :, :, :, u, v
            ].transpose(0, 3, 1, 2)
    if pad:
        gpad = gpad[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(gpad), grad_weight, grad_bias


def _conv_s1_backward(grad_out, x, weight, pad, need_input_grad):
    cout, cin, kh, kw = weight.shape
    b, _, h_out, w_out = grad_out.shape
    xflat, (_, _, hp, wp) = _flat_padded(x, pad)
    n = xflat.shape[1]
    span = n - (kh - 1) * wp - (kw - 1)
    gfull = np.zeros((cout, b, hp, wp), dtype=DTYPE)
    gfull[:, :, :h_out, :w_out] = grad_out.transpose(1, 0, 2, 3)
    gflat = gfull.reshape(cout, -1)[:, :span]
    taps = _tap_offsets(kh, kw, wp)
    gw_taps = np.empty((kh, kw, cout, cin), dtype=DTYPE)
    for u, v, off in taps:
        gw_taps[u, v] = gflat @ xflat[:, off : off + span].T
    grad_weight = np.ascontiguousarray(gw_taps.transpose(2, 3, 0, 1))
    if not need_input_grad:
        return None, grad_weight
    wt = np.ascontiguousarray(weight.transpose(2, 3, 1, 0))  # (kh, kw, Cin, Cout)
    gx = np.zeros((cin, n), dtype=DTYPE)
    for u, v, off in taps:
        gx[:, off : off + span] += wt[u, v] @ gflat
    gx = gx.reshape(cin, b, hp, wp)[:, :, pad : pad + x.shape[2], pad : pad + x.shape[3]]
    return np.ascontiguousarray(gx.transpose(1, 0, 2, 3)), grad_weight


def leaky_relu_forward(x, slope=0.0):
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must lie in [0, 1), got {slope}")
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(grad_out, x, slope=0.0):
    if grad_out.shape != x.shape:
        raise ShapeError(f"leaky_relu_backward: {grad_out.shape} != {x.shape}")
    return np.where(x >= 0, grad_out, slope * grad_out)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train=True,
                      momentum=0.1, eps=1e-5):
    """Per-channel batch normalization.

    Returns ``(out, cache, (running_mean, running_var))``. In train mode the
    batch statistics (biased variance) normalize the input and the returned
    running statistics are the exponential moving average update; the
    running variance tracks the unbiased estimate. In eval mode the running
    statistics are used and returned unchanged.
    """
    _require_rank("batchnorm input", x, 4)
    channels = x.shape[1]
    for name, arr in (("gamma", gamma), ("beta", beta),
                      ("running_mean", running_mean), ("running_var", running_var)):
        if arr.shape != (channels,):
            raise ShapeError(f"batchnorm: {name} shape {arr.shape} != ({channels},)")
    bc = (1, channels, 1, 1)
    if train:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise DegenerateBatchError(
                f"batchnorm needs at least 2 values per channel in train mode, got {n}"
            )
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_mean = (1.0 - momentum) * running_mean + momentum * mean
        new_var = (1.0 - momentum) * running_var + momentum * var * (n / (n - 1))
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bc)) * inv_std.reshape(bc)
    out = gamma.reshape(bc) * xhat + beta.reshape(bc)
    cache = (xhat, inv_std, gamma, train)
    return out, cache, (new_mean, new_var)


def batchnorm_backward(grad_out, cache):
    """Returns ``(grad_input, grad_gamma, grad_beta)``."""
    xhat, inv_std, gamma, train = cache
    if grad_out.shape != xhat.shape:
        raise ShapeError(f"batchnorm_backward: {grad_out.shape} != {xhat.shape}")
    bc = (1, xhat.shape[1], 1, 1)
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    gxhat = grad_out * gamma.reshape(bc)
    if not train:
        return gxhat * inv_std.reshape(bc), grad_gamma, grad_beta
    n = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    s1 = gxhat.sum(axis=(0, 2, 3)).reshape(bc)
    s2 = (gxhat * xhat).sum(axis=(0, 2, 3)).reshape(bc)
    grad_in = (inv_std.reshape(bc) / n) * (n * gxhat - s1 - xhat * s2)
    return grad_in, grad_gamma, grad_beta


def fully_connected_forward(x, weight, bias):
    """``out = flatten(x) @ weight.T + bias`` with weight shaped (out, in)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"fully_connected: flattened input has {flat.shape[1]} features, "
            f"weight expects {weight.shape[1]}"
        )
    return flat @ weight.T + bias


def fully_connected_backward(grad_out, x, weight):
    flat = x.reshape(x.shape[0], -1)
    if grad_out.shape != (x.shape[0], weight.shape[0]):
        raise ShapeError(f"fully_connected_backward: bad grad_out shape {grad_out.shape}")
    grad_in = (grad_out @ weight).reshape(x.shape)
    return grad_in, grad_out.T @ flat, grad_out.sum(axis=0)


def sigmoid_forward(x):
    out = np.empty_like(x, dtype=DTYPE)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(grad_out, out):
    """Backward expressed through the forward output ``out``."""
    if grad_out.shape != out.shape:
        raise ShapeError(f"sigmoid_backward: {grad_out.shape} != {out.shape}")
    return grad_out * out * (1.0 - out)


def add_forward(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"elementwise_add: {a.shape} != {b.shape}")
    return a + b


def add_backward(grad_out):
    return grad_out, grad_out


def channel_concat(tensors):
    if not tensors:
        raise ShapeError("channel_concat needs at least one tensor")
    ref = tensors[0].shape
    for t in tensors:
        if t.ndim != 4 or t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ShapeError(f"channel_concat: incompatible shapes {[t.shape for t in tensors]}")
    return np.concatenate(tensors, axis=1)


def channel_concat_backward(grad_out, channel_counts):
    if grad_out.shape[1] != sum(channel_counts):
        raise ShapeError("channel_concat_backward: channel counts do not match grad_out")
    splits = np.cumsum(channel_counts)[:-1]
    return np.split(grad_out, splits, axis=1)


def avg_pool2_forward(x):
    """2x2 average pooling, stride 2; a trailing odd row/column is dropped."""
    _require_rank("avg_pool2 input", x, 4)
    b, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"avg_pool2: spatial extent too small {x.shape}")
    h2, w2 = h // 2, w // 2
    return x[:, :, : 2 * h2, : 2 * w2].reshape(b, c, h2, 2, w2, 2).mean(axis=(3, 5))


def avg_pool2_backward(grad_out, input_shape):
    b, c, h, w = input_shape
    h2, w2 = h // 2, w // 2
    if grad_out.shape != (b, c, h2, w2):
        raise ShapeError(f"avg_pool2_backward: bad grad_out shape {grad_out.shape}")
    grad = np.zeros(input_shape, dtype=DTYPE)
    up = np.repeat(np.repeat(grad_out * 0.25, 2, axis=2), 2, axis=3)
    grad[:, :, : 2 * h2, : 2 * w2] = up
    return grad
