"""SSIM, detail-layer sparsity and inference timing."""
from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .enhance import luminance
from .numerics import ShapeError

DEFAULT_BENCH_SIZES = (250, 500, 750)


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"SSIM window must be odd and >= 3, got {self.window}")
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValueError("SSIM constants k1, k2 must be positive")


def gaussian_window(side: int, sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    x = np.arange(side) - (side - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    k = taps.size
    rows = sliding_window_view(img, k, axis=0) @ taps
    return sliding_window_view(rows, k, axis=1) @ taps


def ssim_map(a: np.ndarray, b: np.ndarray, cfg: SsimConfig | None = None) -> np.ndarray:
    cfg = cfg or SsimConfig()
    if a.shape != b.shape:
        raise ShapeError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    x = np.asarray(luminance(np.asarray(a, dtype=np.float64)), dtype=np.float64)
    y = np.asarray(luminance(np.asarray(b, dtype=np.float64)), dtype=np.float64)
    if min(x.shape) < cfg.window:
        raise ShapeError(f"image {x.shape} is smaller than the {cfg.window}px SSIM window")
    taps = gaussian_window(cfg.window, cfg.sigma)
    mx, my = _filter_valid(x, taps), _filter_valid(y, taps)
    sxx = _filter_valid(x * x, taps) - mx * mx
    syy = _filter_valid(y * y, taps) - my * my
    sxy = _filter_valid(x * y, taps) - mx * my
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig | None = None) -> float:
    """Mean SSIM on luminance with a Gaussian window, over the valid region only."""
    return float(ssim_map(a, b, cfg).mean())


def sparsity_profile(t: np.ndarray, threshold: float, offset: float = 0.0) -> float:
    """Fraction of values within ``threshold`` of ``offset``.

    Use ``offset=0`` for detail layers and the image mean for images.
    """
    if not threshold > 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")
    return float(np.mean(np.abs(np.asarray(t) - offset) < threshold))


@dataclass
class BenchRow:
    size: int
    seconds: float
    runs: int


def bench_inference(params, sizes: Sequence[int] = DEFAULT_BENCH_SIZES, repeats: int = 3,
                    seed: int = 0) -> list[BenchRow]:
    """Median wall-clock time of the full derain pipeline on synthetic square images."""
    from .pipeline import derain_image

    rows = []
    rng = np.random.default_rng(seed)
    for size in sizes:
        img = rng.random((size, size, 3))
        times = []
        for _ in range(max(repeats, 1)):
            t0 = time.perf_counter()
            derain_image(img, params)
            times.append(time.perf_counter() - t0)
        rows.append(BenchRow(size=size, seconds=statistics.median(times), runs=len(times)))
    return rows


def format_bench(rows: Sequence[BenchRow], threads: int, backend: str) -> str:
    lines = [f"# threads={threads} kernels={backend}",
             f"{'size':>10}  {'seconds':>10}  runs"]
    for r in rows:
        lines.append(f"{f'{r.size}x{r.size}':>10}  {r.seconds:10.4f}  {r.runs}")
    return "\n".join(lines)


def bench_csv(rows: Sequence[BenchRow]) -> str:
    return "size,seconds,runs\n" + "".join(f"{r.size},{r.seconds:.6f},{r.runs}\n" for r in rows)
