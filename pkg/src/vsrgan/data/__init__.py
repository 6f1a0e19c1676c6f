"""Resampling, HR/LR synthesis, image I/O and packed datasets."""

from .imageio import read_pnm, write_pnm
from .packed import PatchDataset, load_dataset, read_dataset, write_dataset, write_manifest
from .resize import contributions, cubic_kernel, imresize_bicubic, resize_matrix
from .sequence import (
    FrameSequenceSample,
    SyntheticScene,
    crop_to_multiple,
    extract_patches,
    replicate_center,
    rgb_to_luminance,
    sliding_windows,
    synthesize_pair,
    synthetic_video,
)
from .build import build_synthetic_dataset
