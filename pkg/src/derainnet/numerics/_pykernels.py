"""Pure numpy versions of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``DERAINNET_PURE_PYTHON=1`` is set. Signatures mirror the Cython module.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "python"


def im2col(x, kh, kw):
    """Gather (N, H, W, C) into rows of flattened (kh, kw, C) windows."""
    n, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # N, ho, wo, C, kh, kw
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))
    return cols.reshape(n * ho * wo, kh * kw * c)


def col2im(cols, n, h, w, c, kh, kw):
    """Scatter-add the rows produced by ``im2col`` back onto an (N, H, W, C) array."""
    ho, wo = h - kh + 1, w - kw + 1
    patches = cols.reshape(n, ho, wo, kh, kw, c)
    out = np.zeros((n, h, w, c), dtype=np.float64)
    for di in range(kh):
        for dj in range(kw):
            out[:, di:di + ho, dj:dj + wo, :] += patches[:, :, :, di, dj, :]
    return out


def _clipped_window_sum(a, r, axis):
    length = a.shape[axis]
    csum = np.cumsum(a, axis=axis, dtype=np.float64)
    zero_shape = list(a.shape)
    zero_shape[axis] = 1
    csum = np.concatenate([np.zeros(zero_shape), csum], axis=axis)
    idx = np.arange(length)
    hi = np.minimum(idx + r + 1, length)
    lo = np.maximum(idx - r, 0)
    sums = np.take(csum, hi, axis=axis) - np.take(csum, lo, axis=axis)
    return sums, (hi - lo).astype(np.float64)


def box_mean(img, r):
    """Mean over the (2r+1)^2 window clipped to the image, per channel. img is (H, W, C)."""
    s, cy = _clipped_window_sum(img, r, 0)
    s, cx = _clipped_window_sum(s, r, 1)
    return s / (cy[:, None, None] * cx[None, :, None])
