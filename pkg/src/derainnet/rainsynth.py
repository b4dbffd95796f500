"""Procedural rain streaks: sparse seeds, motion blur along a line, screen blend."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .numerics import ShapeError

# mean of uniform(0.5, 1), the seed brightness
SEED_MEAN = 0.75


@dataclass(frozen=True)
class RainParams:
    """One rain rendering.

    ``angle_deg`` is measured from vertical; negative values lean the top of
    the streak to the left.
    """

    angle_deg: float
    length_px: int
    density: float
    intensity: float
    seed: int = 0

    def __post_init__(self):
        if self.length_px < 1:
            raise ValueError(f"length_px must be >= 1, got {self.length_px}")
        if not 0 < self.density <= 0.2:
            raise ValueError(f"density must be in (0, 0.2], got {self.density}")
        if not 0 < self.intensity <= 1:
            raise ValueError(f"intensity must be in (0, 1], got {self.intensity}")
        if abs(self.angle_deg) > 45:
            raise ValueError(f"|angle_deg| must be <= 45, got {self.angle_deg}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")


def derive_seed(*keys: int) -> int:
    """Stable 64-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0])


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter based: the stream depends only on the key
    return np.random.Generator(np.random.Philox(key=seed))


def line_kernel(length_px: int, angle_deg: float) -> np.ndarray:
    """Anti-aliased, unit-sum line of ``length_px`` pixels centred in an odd square.

    Points along the segment are splatted bilinearly onto the grid.
    """
    theta = math.radians(angle_deg)
    # (row, col) direction; rows grow downward, so a left lean moves right going down
    dr, dc = math.cos(theta), -math.sin(theta)
    half = (length_px - 1) / 2.0
    side = 2 * int(math.ceil(half)) + 3
    centre = side // 2
    k = np.zeros((side, side))
    n_samples = max(8 * length_px, 8)
    for t in np.linspace(-half, half, n_samples):
        r, c = centre + t * dr, centre + t * dc
        r0, c0 = int(math.floor(r)), int(math.floor(c))
        fr, fc = r - r0, c - c0
        k[r0, c0] += (1 - fr) * (1 - fc)
        k[r0, c0 + 1] += (1 - fr) * fc
        k[r0 + 1, c0] += fr * (1 - fc)
        k[r0 + 1, c0 + 1] += fr * fc
    return k / k.sum()


def render_rain_layer(height: int, width: int, p: RainParams) -> np.ndarray:
    """Single-channel rain layer of shape (height, width, 1) with values in [0, 1].

    Deterministic in ``(height, width, p)``.
    """
    if height < p.length_px or width < p.length_px:
        raise ShapeError(
            f"rain layer {height}x{width} is smaller than streak length {p.length_px}")
    rng = _rng(p.seed)
    active = rng.random((height, width)) < p.density
    brightness = rng.uniform(0.5, 1.0, size=(height, width))
    seeds = np.where(active, brightness, 0.0)
    streaks = ndimage.correlate(seeds, line_kernel(p.length_px, p.angle_deg),
                                mode="constant", cval=0.0)
    return np.clip(streaks * p.intensity, 0.0, 1.0)[:, :, None]


def composite(clean: np.ndarray, rain: np.ndarray) -> np.ndarray:
    """Screen-blend a single-channel rain layer over every channel of ``clean``."""
    if rain.ndim == 2:
        rain = rain[:, :, None]
    if clean.shape[:2] != rain.shape[:2] or rain.shape[2] != 1:
        raise ShapeError(f"cannot composite rain {rain.shape} over image {clean.shape}")
    return 1.0 - (1.0 - clean) * (1.0 - rain)


def default_variants() -> list[RainParams]:
    """The 14-variant grid: 7 orientations, each light and heavy."""
    profiles = [
        dict(intensity=0.5, length_px=15, density=0.03),
        dict(intensity=0.8, length_px=30, density=0.06),
    ]
    angles = (-30, -20, -10, 0, 10, 20, 30)
    out = []
    for prof in profiles:
        for angle in angles:
            out.append(RainParams(angle_deg=angle, seed=derive_seed(0x5A1, len(out)), **prof))
    return out
