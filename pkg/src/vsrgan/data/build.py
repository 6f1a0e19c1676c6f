"""End-to-end synthetic dataset construction."""

from __future__ import annotations

from ..errors import ConfigError
from .packed import PatchDataset
from .sequence import extract_patches, sliding_windows, synthesize_pair, synthetic_video

VALID_SCALES = (1, 2, 3, 4)


def build_synthetic_dataset(seed=0, frames=16, size=72, motion=(1.0, 0.5), scale=2,
                            patch=36, stride=36, window=5, **scene_kwargs):
    """Seeded video -> 5-frame windows -> degraded pairs -> aligned patches."""
    if scale not in VALID_SCALES:
        raise ConfigError(f"scale must be one of {VALID_SCALES}, got {scale}")
    if frames < window:
        raise ConfigError(f"need at least {window} frames, got {frames}")
    video = synthetic_video(seed, frames, size, size, motion, **scene_kwargs)
    samples = []
    for t, group in enumerate(sliding_windows(video, window)):
        pair = synthesize_pair(group, scale, source_id=f"seed{seed}/t{t + window // 2:04d}")
        samples.extend(extract_patches(pair, patch, stride))
    return PatchDataset.from_samples(samples)
