"""Traffic trace synthesis with GASF images and diffusion models."""

from ._core import (
    StageError,
    alpha_bars,
    bin_trace,
    crop_prefix,
    embed_images,
    enhance,
    fix_length,
    frechet_distance,
    gasf_decode,
    gasf_encode,
    histogram_compare,
    image_fid,
    minmax_normalize,
    predictive_entropy,
    run_stage,
    stages,
    toy_dataset,
)

__all__ = [
    "StageError",
    "alpha_bars",
    "bin_trace",
    "crop_prefix",
    "embed_images",
    "enhance",
    "fix_length",
    "frechet_distance",
    "gasf_decode",
    "gasf_encode",
    "histogram_compare",
    "image_fid",
    "minmax_normalize",
    "predictive_entropy",
    "run_stage",
    "stages",
    "toy_dataset",
]
