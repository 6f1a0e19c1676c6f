"""HR/LR sequence synthesis, patch extraction and the synthetic video source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ShapeError
from .resize import imresize_bicubic

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class FrameSequenceSample:
    """Input frames ``Y_t`` (F, 1, N, N) and the HR center frame (1, N, N)."""

    lr_frames: np.ndarray
    hr_center: np.ndarray
    scale: int
    source_id: str = ""

    @property
    def num_frames(self):
        return self.lr_frames.shape[0]


def _as_plane(frame):
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[0] != 1:
        raise ShapeError(f"expected a (1, H, W) luminance frame, got {arr.shape}")
    return arr


def crop_to_multiple(frame, scale):
    """Center-crop the trailing axes to the largest multiple of ``scale``."""
    h, w = frame.shape[-2:]
    hh, ww = (h // scale) * scale, (w // scale) * scale
    top, left = (h - hh) // 2, (w - ww) // 2
    return frame[..., top : top + hh, left : left + ww]


def degrade(frame, scale, antialias=True):
    """Bicubic down by ``scale`` then back up to the original size, clipped to [0, 1]."""
    h, w = frame.shape[-2:]
    if h % scale or w % scale:
        raise ShapeError(f"frame {h}x{w} not divisible by scale {scale}")
    small = imresize_bicubic(frame, h // scale, w // scale, antialias=antialias)
    return np.clip(imresize_bicubic(small, h, w, antialias=antialias), 0.0, 1.0)


def synthesize_pair(hr_frames, scale, antialias=True, source_id=""):
    """Full-frame training pair from consecutive HR frames.

    Every frame is degraded independently; the HR center frame is kept
    untouched apart from the crop that makes its size divisible by ``scale``.
    """
    if scale < 1:
        raise ConfigError(f"scale must be >= 1, got {scale}")
    planes = [_as_plane(f) for f in hr_frames]
    if len(planes) % 2 == 0:
        raise ShapeError(f"need an odd number of frames, got {len(planes)}")
    if any(p.shape != planes[0].shape for p in planes):
        raise ShapeError(f"frame sizes differ: {[p.shape for p in planes]}")
    planes = [crop_to_multiple(p, scale) for p in planes]
    lr = np.stack([degrade(p, scale, antialias) for p in planes])
    hr = planes[len(planes) // 2].copy()
    return FrameSequenceSample(lr, hr, scale, source_id)


def extract_patches(sample, patch=36, stride=36):
    """Aligned crops on a regular grid; partial border patches are discarded."""
    if stride < 1:
        raise ConfigError("patch stride must be >= 1")
    h, w = sample.hr_center.shape[-2:]
    if patch > h or patch > w:
        raise ConfigError(f"patch {patch} larger than frame {h}x{w}")
    out = []
    for top in range(0, h - patch + 1, stride):
        for left in range(0, w - patch + 1, stride):
            sl = (Ellipsis, slice(top, top + patch), slice(left, left + patch))
            out.append(FrameSequenceSample(
                sample.lr_frames[sl].copy(),
                sample.hr_center[sl].copy(),
                sample.scale,
                f"{sample.source_id}@{top},{left}",
            ))
    return out


def replicate_center(sample):
    """Center-frame-only input: every time step is the center LR frame."""
    f = sample.num_frames
    lr = np.repeat(sample.lr_frames[f // 2][None], f, axis=0)
    return FrameSequenceSample(lr, sample.hr_center, sample.scale, sample.source_id)


def rgb_to_luminance(rgb):
    """BT.601 luma of a (3, H, W) image."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ShapeError(f"expected (3, H, W), got {rgb.shape}")
    r, g, b = LUMA_WEIGHTS
    return (r * rgb[0] + g * rgb[1] + b * rgb[2])[None]


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class SyntheticScene:
    """Seeded continuous texture: band-limited sinusoids plus soft shapes.

    The scene is a function of continuous coordinates, so translated frames
    sample exactly the same pattern at shifted positions.
    """

    def __init__(self, seed, height, width, max_frequency=0.4, num_waves=24,
                 num_shapes=8, edge_width=0.3):
        rng = np.random.default_rng(seed)
        freq = rng.uniform(0.02, max_frequency, num_waves)
        theta = rng.uniform(0.0, 2 * np.pi, num_waves)
        self.kx = 2 * np.pi * freq * np.cos(theta)
        self.ky = 2 * np.pi * freq * np.sin(theta)
        self.phase = rng.uniform(0.0, 2 * np.pi, num_waves)
        amp = 1.0 / (1.0 + freq / 0.05)
        self.amp = 0.22 * amp / amp.sum()
        self.edge = edge_width
        self.shapes = []
        for _ in range(num_shapes):
            self.shapes.append((
                "disk" if rng.random() < 0.5 else "box",
                rng.uniform(-0.2, 1.2) * width,   # cx
                rng.uniform(0.0, 1.0) * height,   # cy
                rng.uniform(3.0, 0.25 * min(height, width)),  # size
                rng.uniform(-0.35, 0.35),          # contrast
            ))

    def sample(self, ys, xs):
        value = 0.5 + np.zeros(np.broadcast(ys, xs).shape)
        for kx, ky, ph, a in zip(self.kx, self.ky, self.phase, self.amp):
            value += a * np.cos(kx * xs + ky * ys + ph)
        for kind, cx, cy, size, contrast in self.shapes:
            if kind == "disk":
                dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
                mask = _logistic((size - dist) / self.edge)
            else:
                mask = (_logistic((size - np.abs(xs - cx)) / self.edge)
                        * _logistic((0.6 * size - np.abs(ys - cy)) / self.edge))
            value += contrast * mask
        return np.clip(value, 0.0, 1.0)


def synthetic_video(seed, num_frames, height, width, motion=(0.0, 0.0), **scene_kwargs):
    """Frames of a seeded scene translating by ``motion = (dx, dy)`` px/frame.

    Returns a list of (1, H, W) arrays in [0, 1]. With ``motion=(1, 0)``
    frame k+1 equals frame k shifted one column to the right.
    """
    if height < 16 or width < 16:
        raise ConfigError("synthetic video needs H, W >= 16")
    scene = SyntheticScene(seed, height, width, **scene_kwargs)
    dx, dy = motion
    ys, xs = np.meshgrid(np.arange(height, dtype=float), np.arange(width, dtype=float),
                         indexing="ij")
    return [scene.sample(ys - k * dy, xs - k * dx)[None] for k in range(num_frames)]


def sliding_windows(frames, window=5):
    """Consecutive ``window``-frame groups, one per valid center frame."""
    if window % 2 == 0 or window < 1:
        raise ConfigError("window must be odd")
    return [frames[t : t + window] for t in range(len(frames) - window + 1)]
