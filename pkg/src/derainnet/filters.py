"""Guided filtering and the base/detail split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ShapeError, box_mean


@dataclass(frozen=True)
class GuidedFilterConfig:
    """Window radius (px) and regularizer for [0, 1] intensities.

    The radius has to exceed the width of the structures meant to land in
    the detail layer (rain streaks), hence the fairly large default.
    """

    radius: int = 15
    epsilon: float = 0.01

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError(f"guided filter radius must be >= 1, got {self.radius}")
        if not self.epsilon > 0:
            raise ValueError(f"guided filter epsilon must be > 0, got {self.epsilon}")


@dataclass
class Decomposition:
    base: np.ndarray
    detail: np.ndarray

    def recompose(self) -> np.ndarray:
        return self.base + self.detail


def guided_filter(src: np.ndarray, guide: np.ndarray, cfg: GuidedFilterConfig) -> np.ndarray:
    """Edge-preserving smoothing of ``src`` steered by ``guide``, channel by channel.

    Each channel fits a local linear model ``src ~ a * guide + b`` over every
    window; the averaged coefficients are then applied to the guide.
    """
    if src.shape != guide.shape:
        raise ShapeError(f"input shape {src.shape} does not match guide shape {guide.shape}")
    squeeze = src.ndim == 2
    p = np.asarray(src, dtype=np.float64)
    g = np.asarray(guide, dtype=np.float64)
    if squeeze:
        p, g = p[:, :, None], g[:, :, None]
    r = cfg.radius
    mean_g = box_mean(g, r)
    mean_p = box_mean(p, r)
    var_g = box_mean(g * g, r) - mean_g * mean_g
    cov_gp = box_mean(g * p, r) - mean_g * mean_p
    a = cov_gp / (var_g + cfg.epsilon)
    b = mean_p - a * mean_g
    out = box_mean(a, r) * g + box_mean(b, r)
    return out[:, :, 0] if squeeze else out


def decompose(image: np.ndarray, cfg: GuidedFilterConfig | None = None) -> Decomposition:
    """Split ``image`` into a self-guided low-pass base and the residual detail."""
    cfg = cfg or GuidedFilterConfig()
    img = np.asarray(image, dtype=np.float64)
    base = guided_filter(img, img, cfg)
    return Decomposition(base=base, detail=img - base)
