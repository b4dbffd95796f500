"""Dense tensor kernels shared by every other module.

Images and feature maps are plain numpy arrays laid out (H, W, C), or
(N, H, W, C) for batches. Convolutions are valid-mode cross-correlations
(no kernel flip) in both the forward and backward pass, accumulated in
float64.

The gather/scatter and box-filter loops come from a compiled extension
when it was built; otherwise a numpy fallback is used. ``BACKEND`` names
the active one and :func:`set_backend` switches at runtime.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

# cap on the im2col buffer before conv_valid splits the work by output rows
_MAX_COLS_BYTES = 64 * 1024 * 1024


def available_backends() -> list[str]:
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return names


def set_backend(name: str) -> None:
    """Select ``"compiled"`` or ``"python"`` kernels for subsequent calls."""
    global _k, BACKEND
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; reinstall with Cython available")
        _k = _ckernels
    elif name == "python":
        _k = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


if _ckernels is not None and not os.environ.get("DERAINNET_PURE_PYTHON"):
    _k, BACKEND = _ckernels, "compiled"
else:
    _k, BACKEND = _pykernels, "python"


def current_backend() -> str:
    return BACKEND


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


@dataclass
class KernelBank:
    """A bank of ``count`` kernels of size (kh, kw, in_channels) plus biases.

    ``weights`` has shape (count, kh, kw, in_channels), the same order the
    weight file uses.
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise ShapeError(f"weights must be 4-D (count, kh, kw, in), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match kernel count {self.weights.shape[0]}")

    @property
    def count(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> tuple[int, int]:
        return self.weights.shape[1], self.weights.shape[2]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[3]

    def astype(self, dtype) -> KernelBank:
        return KernelBank(self.weights.astype(dtype), self.bias.astype(dtype))

    def copy(self) -> KernelBank:
        return KernelBank(self.weights.copy(), self.bias.copy())


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (H, W, C) or (N, H, W, C) tensor, got shape {x.shape}")


def _check_conv(xb: np.ndarray, bank: KernelBank) -> None:
    kh, kw = bank.size
    _, h, w, c = xb.shape
    if c != bank.in_channels or h < kh or w < kw:
        raise ShapeError(
            f"input shape {xb.shape[1:]} incompatible with kernel bank "
            f"{(bank.count, kh, kw, bank.in_channels)}")


def _weight_matrix(bank: KernelBank) -> np.ndarray:
    return bank.weights.reshape(bank.count, -1).astype(np.float64, copy=False)


def conv_valid(x: np.ndarray, bank: KernelBank) -> np.ndarray:
    """Valid cross-correlation of ``x`` with every kernel in ``bank``, plus bias.

    Output is (H-kh+1, W-kw+1, count), batched if ``x`` was.
    """
    xb, single = _as_batch(x)
    _check_conv(xb, bank)
    xb = np.ascontiguousarray(xb, dtype=np.float64)
    kh, kw = bank.size
    n, h, w, _ = xb.shape
    ho, wo = h - kh + 1, w - kw + 1
    wmat = _weight_matrix(bank)
    bias = bank.bias.astype(np.float64)
    row_bytes = wo * wmat.shape[1] * 8
    out = np.empty((n, ho, wo, bank.count))
    rows_per_chunk = max(1, _MAX_COLS_BYTES // max(row_bytes, 1))
    for b in range(n):
        for r0 in range(0, ho, rows_per_chunk):
            r1 = min(ho, r0 + rows_per_chunk)
            cols = _k.im2col(xb[b:b + 1, r0:r1 + kh - 1], kh, kw)
            res = cols @ wmat.T
            res += bias
            out[b, r0:r1] = res.reshape(r1 - r0, wo, bank.count)
    return out[0] if single else out


def conv_forward_cached(x: np.ndarray, bank: KernelBank) -> tuple[np.ndarray, np.ndarray]:
    """Batched conv_valid that also returns the im2col matrix for reuse in the backward pass."""
    xb, _ = _as_batch(x)
    _check_conv(xb, bank)
    xb = np.ascontiguousarray(xb, dtype=np.float64)
    kh, kw = bank.size
    n, h, w, _ = xb.shape
    cols = _k.im2col(xb, kh, kw)
    out = cols @ _weight_matrix(bank).T
    out += bank.bias.astype(np.float64)
    return out.reshape(n, h - kh + 1, w - kw + 1, bank.count), cols


def conv_backward(x: np.ndarray, bank: KernelBank, grad_out: np.ndarray, *,
                  cols: np.ndarray | None = None,
                  need_input_grad: bool = True) -> tuple[np.ndarray | None, KernelBank]:
    """Gradients of a downstream scalar through ``conv_valid(x, bank)``.

    Returns ``(grad_input, grad_bank)`` where ``grad_bank`` holds the weight and
    bias gradients. ``cols`` may carry the im2col matrix from
    :func:`conv_forward_cached` to skip recomputing it.
    """
    xb, single = _as_batch(x)
    _check_conv(xb, bank)
    gb, _ = _as_batch(grad_out)
    kh, kw = bank.size
    n, h, w, c = xb.shape
    expected = (n, h - kh + 1, w - kw + 1, bank.count)
    if gb.shape != expected:
        raise ShapeError(f"grad_out shape {gb.shape} does not match conv output shape {expected}")
    if cols is None:
        cols = _k.im2col(np.ascontiguousarray(xb, dtype=np.float64), kh, kw)
    gmat = gb.reshape(-1, bank.count).astype(np.float64, copy=False)
    grad_w = (gmat.T @ cols).reshape(bank.weights.shape)
    grad_b = gmat.sum(axis=0)
    grad_in = None
    if need_input_grad:
        dcols = np.ascontiguousarray(gmat @ _weight_matrix(bank))
        grad_in = _k.col2im(dcols, n, h, w, c, kh, kw)
        if single:
            grad_in = grad_in[0]
    return grad_in, KernelBank(grad_w, grad_b)


def tanh_map(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_backward(activated: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """Chain rule through tanh given its *output* ``activated``."""
    _same_shape(activated, grad_out)
    return grad_out * (1.0 - activated * activated)


def box_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Per-channel mean over a (2r+1)^2 window clipped to the image.

    The divisor is the number of in-bounds pixels, so borders are not
    darkened. Cost does not depend on ``radius``.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    squeeze = img.ndim == 2
    a = img[:, :, None] if squeeze else img
    if a.ndim != 3:
        raise ShapeError(f"box_mean expects (H, W) or (H, W, C), got {img.shape}")
    out = _k.box_mean(np.ascontiguousarray(a, dtype=np.float64), int(radius))
    return out[:, :, 0] if squeeze else out


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a + b


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a - b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _same_shape(a, b)
    return a * b


def scale(a: np.ndarray, factor: float) -> np.ndarray:
    return a * factor


def clamp01(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0.0, 1.0)


__all__ = [
    "BACKEND", "KernelBank", "ShapeError", "add", "available_backends", "box_mean",
    "clamp01", "conv_backward", "current_backend", "conv_forward_cached", "conv_valid", "mul", "scale",
    "set_backend", "sub", "tanh_backward", "tanh_map",
]
