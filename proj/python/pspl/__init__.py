"""Per-pixel similarity maps, decaying attention schedules, and image helpers.

The native module carries the implementation; this package only re-exports it.
"""

from ._pspl import (
    attention_map,
    delta_at,
    load_pfm,
    load_png,
    mean_ssim,
    resize,
    save_pfm,
    ssim_map,
)

__all__ = [
    "attention_map",
    "delta_at",
    "load_pfm",
    "load_png",
    "mean_ssim",
    "resize",
    "save_pfm",
    "ssim_map",
]
