"""Full-reference quality metrics: PSNR, SSIM and a deep-feature distance."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
FEATURE_DISTANCE_LABEL = "feature_distance (proxy)"
REPORT_HEADER = ["frame_id", "psnr", "ssim", "featdist"]


def _check_pair(x, xhat, crop):
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {xhat.shape}")
    if x.ndim < 2:
        raise ShapeError("images need at least two dimensions")
    if crop < 0 or 2 * crop >= min(x.shape[-2:]):
        raise ConfigError(f"crop {crop} invalid for size {x.shape[-2:]}")
    if crop:
        x = x[..., crop:-crop, crop:-crop]
        xhat = xhat[..., crop:-crop, crop:-crop]
    return x, xhat


def psnr(x, xhat, peak=1.0, crop=0):
    """Peak signal-to-noise ratio in dB after cropping ``crop`` border pixels.

    Identical inputs give ``inf``.
    """
    if peak <= 0:
        raise ConfigError("peak must be positive")
    x, xhat = _check_pair(x, xhat, crop)
    mse = float(np.mean((x - xhat) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    """Normalized 1-D Gaussian; the 2-D window is its outer product."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable 'valid' correlation of the trailing two axes with ``g``."""
    rows = sliding_window_view(img, g.size, axis=-2) @ g
    return sliding_window_view(rows, g.size, axis=-1) @ g


def _ssim_map(x, y, peak):
    g = gaussian_window()
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, xhat, peak=1.0, crop=0):
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5).

    The map is averaged over valid window positions of the trailing two
    axes; leading axes (channels, batch) are averaged too.
    """
    x, xhat = _check_pair(x, xhat, crop)
    if min(x.shape[-2:]) < SSIM_WINDOW:
        raise ConfigError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[-2:]}")
    return float(np.mean(_ssim_map(x, xhat, peak)))


def _unit_normalize(feat, eps=1e-10):
    norm = np.sqrt(np.sum(feat * feat, axis=1, keepdims=True))
    return feat / (norm + eps)


def feature_distance(x, xhat, feature_net):
    """Distance between unit-normalized deep features of two images.

    Channel vectors are normalized at every site, squared differences are
    summed over channels, averaged over space and then over the taps.
    Inputs are (1, H, W) or (B, 1, H, W); returns one value per batch item
    for batched input.
    """
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {xhat.shape}")
    single = x.ndim == 3
    if single:
        x, xhat = x[None], xhat[None]
    fa = [t.copy() for t in feature_net.forward(x)]
    fb = feature_net.forward(xhat)
    per_tap = []
    for a, b in zip(fa, fb):
        d = _unit_normalize(a) - _unit_normalize(b)
        per_tap.append(np.mean(np.sum(d * d, axis=1), axis=(1, 2)))
    out = np.mean(per_tap, axis=0)
    return float(out[0]) if single else out


def _fmt(v):
    return "inf" if v == math.inf else repr(float(v))


@dataclass
class EvalReport:
    """Per-frame and aggregate quality numbers for one model and dataset."""

    model: str
    scale: int
    crop: int
    frame_ids: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    featdist: list = field(default_factory=list)
    center_frame_only: bool = False

    def add(self, frame_id, p, s, f):
        self.frame_ids.append(frame_id)
        self.psnr.append(float(p))
        self.ssim.append(float(s))
        self.featdist.append(float(f))

    def __len__(self):
        return len(self.frame_ids)

    @property
    def mean_psnr(self):
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self):
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    @property
    def mean_featdist(self):
        return float(np.mean(self.featdist)) if self.featdist else math.nan

    def summary(self):
        return {
            "model": self.model,
            "scale": self.scale,
            "crop": self.crop,
            "center_frame_only": self.center_frame_only,
            "frames": len(self),
            "psnr": _fmt(self.mean_psnr),
            "ssim": self.mean_ssim,
            FEATURE_DISTANCE_LABEL: self.mean_featdist,
        }

    def to_json(self):
        body = dict(self.summary())
        body["per_frame"] = [
            {"frame_id": i, "psnr": _fmt(p), "ssim": s, FEATURE_DISTANCE_LABEL: f}
            for i, p, s, f in zip(self.frame_ids, self.psnr, self.ssim, self.featdist)
        ]
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for row in zip(self.frame_ids, self.psnr, self.ssim, self.featdist):
            w.writerow([row[0], _fmt(row[1]), repr(row[2]), repr(row[3])])
        return buf.getvalue()

    @staticmethod
    def read_csv(text):
        reader = csv.reader(io.StringIO(text))
        if next(reader) != REPORT_HEADER:
            raise ValueError("unexpected report header")
        return [(r[0], float(r[1]), float(r[2]), float(r[3])) for r in reader]

    def text(self):
        s = self.summary()
        return (f"model={s['model']} scale={s['scale']} crop={s['crop']} "
                f"center_frame_only={s['center_frame_only']} frames={s['frames']}\n"
                f"PSNR {s['psnr']} dB  SSIM {s['ssim']:.6f}  "
                f"{FEATURE_DISTANCE_LABEL} {s[FEATURE_DISTANCE_LABEL]:.6g}\n")
