"""Binary PGM (P5) / PPM (P6) reading and writing, 8- or 16-bit."""

from __future__ import annotations

import re

import numpy as np

from ..errors import ConfigError

_TOKEN = re.compile(rb"(?:#[^\n]*\n|\s)*(\S+)")


def _parse_header(data):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ConfigError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pnm(path):
    """Read a P5/P6 file; returns a (C, H, W) float array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), offset = _parse_header(data)
    if magic not in (b"P5", b"P6"):
        raise ConfigError(f"{path}: unsupported PNM type {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ConfigError(f"{path}: invalid maxval {maxval}")
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
    img = raw.reshape(h, w, channels).transpose(2, 0, 1).astype(np.float64)
    return img / maxval


def _quantize(img, maxval):
    return np.round(np.clip(img, 0.0, 1.0) * maxval)


def write_pnm(path, image, bits=16):
    """Write a (1, H, W) or (3, H, W) image in [0, 1] as PGM/PPM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    if img.shape[0] not in (1, 3):
        raise ConfigError(f"expected 1 or 3 channels, got {img.shape}")
    maxval = 65535 if bits == 16 else 255
    dtype = ">u2" if bits == 16 else "u1"
    magic = b"P5" if img.shape[0] == 1 else b"P6"
    h, w = img.shape[1:]
    raster = _quantize(img, maxval).astype(dtype).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n%d\n" % (magic, w, h, maxval))
        fh.write(raster)
