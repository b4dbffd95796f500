"""Reconstruction of the derained image, with optional contrast enhancement.

The base-layer enhancement is a gamma curve followed by a percentile
contrast stretch computed on luminance. Clamping to [0, 1] happens once,
on the final image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import GuidedFilterConfig, decompose
from .numerics import ShapeError, clamp01

MODES = ("none", "post", "simultaneous")
LUMA = np.array([0.299, 0.587, 0.114])

STRETCH_PERCENTILES = (1.0, 99.0)
STRETCH_TARGETS = (0.02, 0.98)


@dataclass(frozen=True)
class EnhanceConfig:
    gamma: float = 0.8
    detail_boost: float = 2.0
    mode: str = "simultaneous"
    # disable to leave the gamma-mapped base un-stretched
    stretch: bool = True

    def __post_init__(self):
        if not 0 < self.gamma <= 2:
            raise ValueError(f"gamma must be in (0, 2], got {self.gamma}")
        if not self.detail_boost > 0:
            raise ValueError(f"detail_boost must be > 0, got {self.detail_boost}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


def luminance(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img
    if img.shape[-1] == 1:
        return img[..., 0]
    if img.shape[-1] != 3:
        raise ShapeError(f"luminance needs 1 or 3 channels, got shape {img.shape}")
    return img @ LUMA


def _enhance_base_raw(base: np.ndarray, cfg: EnhanceConfig) -> np.ndarray:
    # clip only guards the power against tiny negative overshoots of the filter
    mapped = base if cfg.gamma == 1 else np.power(np.clip(base, 0.0, None), cfg.gamma)
    if not cfg.stretch:
        return mapped
    lo, hi = np.percentile(luminance(mapped), STRETCH_PERCENTILES)
    if hi <= lo:
        return mapped
    t_lo, t_hi = STRETCH_TARGETS
    return (mapped - lo) * ((t_hi - t_lo) / (hi - lo)) + t_lo


def enhance_base(base: np.ndarray, cfg: EnhanceConfig | None = None) -> np.ndarray:
    """Gamma-map ``base`` and stretch its 1st/99th luminance percentiles to 0.02/0.98.

    A constant (degenerate) image skips the stretch.
    """
    return clamp01(_enhance_base_raw(base, cfg or EnhanceConfig()))


def reconstruct(base: np.ndarray, derained_detail: np.ndarray) -> np.ndarray:
    if base.shape != derained_detail.shape:
        raise ShapeError(f"base shape {base.shape} does not match detail shape {derained_detail.shape}")
    return clamp01(base + derained_detail)


def reconstruct_enhanced(base: np.ndarray, derained_detail: np.ndarray,
                         cfg: EnhanceConfig | None = None,
                         filter_cfg: GuidedFilterConfig | None = None) -> np.ndarray:
    """Combine base and derained detail according to ``cfg.mode``.

    ``simultaneous`` enhances the base and boosts the detail in one go;
    ``post`` reconstructs plainly, re-decomposes the result with
    ``filter_cfg`` and enhances that; ``none`` is plain reconstruction.
    """
    cfg = cfg or EnhanceConfig()
    if base.shape != derained_detail.shape:
        raise ShapeError(f"base shape {base.shape} does not match detail shape {derained_detail.shape}")
    if cfg.mode == "none":
        return reconstruct(base, derained_detail)
    if cfg.mode == "post":
        parts = decompose(reconstruct(base, derained_detail), filter_cfg)
        base, derained_detail = parts.base, parts.detail
    return clamp01(_enhance_base_raw(base, cfg) + cfg.detail_boost * derained_detail)
