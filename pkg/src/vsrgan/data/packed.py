"""Packed patch dataset (``VSRD``) and its JSON manifest.

Layout, all little-endian::

    b"VSRD" | u32 version | u32 scale | u32 patch | u32 frames | u32 count
    count x ( float32[frames*patch*patch] LR | float32[patch*patch] HR )
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError, ShapeError
from .sequence import FrameSequenceSample

MAGIC = b"VSRD"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


@dataclass
class PatchDataset:
    """Stacked samples: ``lr`` (S, F, 1, N, N) and ``hr`` (S, 1, N, N)."""

    lr: np.ndarray
    hr: np.ndarray
    scale: int
    source_ids: list = field(default_factory=list)

    def __post_init__(self):
        if self.lr.ndim != 5 or self.hr.ndim != 4 or self.lr.shape[0] != self.hr.shape[0]:
            raise ShapeError(f"inconsistent dataset shapes {self.lr.shape} / {self.hr.shape}")
        if not self.source_ids:
            self.source_ids = [f"sample{i}" for i in range(len(self))]

    def __len__(self):
        return self.lr.shape[0]

    @property
    def patch_size(self):
        return self.hr.shape[-1]

    @property
    def num_frames(self):
        return self.lr.shape[1]

    @classmethod
    def from_samples(cls, samples):
        if not samples:
            raise ShapeError("cannot build a dataset from zero samples")
        return cls(
            np.stack([s.lr_frames for s in samples]),
            np.stack([s.hr_center for s in samples]),
            samples[0].scale,
            [s.source_id for s in samples],
        )

    def sample(self, i):
        return FrameSequenceSample(self.lr[i], self.hr[i], self.scale, self.source_ids[i])

    def subset(self, indices):
        indices = list(indices)
        return PatchDataset(self.lr[indices], self.hr[indices], self.scale,
                            [self.source_ids[i] for i in indices])


def write_dataset(path, dataset):
    s, f, _, n, _ = dataset.lr.shape
    lr = dataset.lr.reshape(s, -1).astype("<f4")
    hr = dataset.hr.reshape(s, -1).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dataset.scale, n, f, s))
        fh.write(np.concatenate([lr, hr], axis=1).tobytes())


def read_dataset(path, source_ids=None):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated dataset header")
    magic, version, scale, n, f, s = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported dataset version {version}")
    per = f * n * n + n * n
    if len(data) != _HEADER.size + 4 * per * s:
        raise CheckpointError(f"{path}: size does not match header ({s} samples)")
    block = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(s, per)
    lr = block[:, : f * n * n].astype(np.float64).reshape(s, f, 1, n, n)
    hr = block[:, f * n * n :].astype(np.float64).reshape(s, 1, n, n)
    return PatchDataset(lr, hr, scale, list(source_ids or []))


def write_manifest(path, dataset, data_file, params):
    record_bytes = 4 * (dataset.num_frames + 1) * dataset.patch_size ** 2
    manifest = {
        "format": "VSRD",
        "version": VERSION,
        "data_file": str(data_file),
        "scale": dataset.scale,
        "patch_size": dataset.patch_size,
        "frames": dataset.num_frames,
        "count": len(dataset),
        "params": params,
        "samples": [
            {"index": i, "source_id": sid, "offset": _HEADER.size + i * record_bytes}
            for i, sid in enumerate(dataset.source_ids)
        ],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def manifest_path(data_path):
    return Path(data_path).with_suffix(".json")


def load_dataset(path):
    """Read a packed dataset, picking up source ids from its manifest if present."""
    mpath = manifest_path(path)
    ids = None
    if mpath.exists():
        ids = [s["source_id"] for s in json.loads(mpath.read_text())["samples"]]
    return read_dataset(path, ids)
