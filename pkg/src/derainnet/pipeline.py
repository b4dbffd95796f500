"""Whole-image deraining: decompose, run the network on the detail, reconstruct."""
from __future__ import annotations

import numpy as np

from .enhance import EnhanceConfig, reconstruct_enhanced
from .filters import GuidedFilterConfig, decompose
from .network import NetworkParams, forward
from .numerics import ShapeError


def as_rgb(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        img = img[:, :, None]
    if img.shape[2] == 1:
        return np.repeat(img, 3, axis=2)
    if img.shape[2] != 3:
        raise ShapeError(f"expected a gray or RGB image, got shape {img.shape}")
    return img


def pad_for_network(detail: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Reflect-pad so the network output lines up pixel for pixel with ``detail``."""
    shrink = params.shrink
    before, after = shrink // 2, shrink - shrink // 2
    return np.pad(detail, ((before, after), (before, after), (0, 0)), mode="reflect")


def derain_detail(detail: np.ndarray, params: NetworkParams) -> np.ndarray:
    h, w = detail.shape[:2]
    need = params.min_input_side
    if h < need or w < need:
        raise ShapeError(f"image {h}x{w} is smaller than the network minimum {need}x{need}")
    return forward(params, pad_for_network(detail, params))


def derain_image(img: np.ndarray, params: NetworkParams,
                 filter_cfg: GuidedFilterConfig | None = None,
                 enhance_cfg: EnhanceConfig | None = None) -> np.ndarray:
    """Derain a single (H, W, 3) or gray image in [0, 1]; the output keeps its size.

    ``enhance_cfg`` defaults to no enhancement.
    """
    filter_cfg = filter_cfg or GuidedFilterConfig()
    enhance_cfg = enhance_cfg or EnhanceConfig(mode="none")
    parts = decompose(as_rgb(np.asarray(img, dtype=np.float64)), filter_cfg)
    clean_detail = derain_detail(parts.detail, params)
    return reconstruct_enhanced(parts.base, clean_detail, enhance_cfg, filter_cfg)
