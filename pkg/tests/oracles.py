"""Brute-force reference implementations used as test oracles.

Deliberately naive: explicit loops, no integral images, no im2col, no
separable filters. They share nothing with the code under test beyond numpy.
"""
import math

import numpy as np


def conv_direct(x, weights, bias):
    """Quadruple-loop valid cross-correlation. x (H, W, C), weights (K, kh, kw, C)."""
    h, w, c = x.shape
    k, kh, kw, _ = weights.shape
    out = np.zeros((h - kh + 1, w - kw + 1, k))
    for o in range(k):
        for i in range(h - kh + 1):
            for j in range(w - kw + 1):
                acc = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        for ch in range(c):
                            acc += x[i + di, j + dj, ch] * weights[o, di, dj, ch]
                out[i, j, o] = acc + bias[o]
    return out


def window_mean_direct(img, r):
    """Per-pixel average over the (2r+1)^2 window clipped to the image."""
    h, w, c = img.shape
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            y0, y1 = max(0, y - r), min(h, y + r + 1)
            x0, x1 = max(0, x - r), min(w, x + r + 1)
            for ch in range(c):
                total = 0.0
                for yy in range(y0, y1):
                    for xx in range(x0, x1):
                        total += img[yy, xx, ch]
                out[y, x, ch] = total / ((y1 - y0) * (x1 - x0))
    return out


def guided_filter_direct(p, guide, r, eps):
    """Guided filter from explicit per-window statistics, single channel (H, W)."""
    h, w = p.shape
    a = np.zeros((h, w))
    b = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            win_g = guide[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].ravel()
            win_p = p[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1].ravel()
            n = win_g.size
            mg = sum(win_g) / n
            mp = sum(win_p) / n
            var = sum((v - mg) ** 2 for v in win_g) / n
            cov = sum((gv - mg) * (pv - mp) for gv, pv in zip(win_g, win_p)) / n
            a[y, x] = cov / (var + eps)
            b[y, x] = mp - a[y, x] * mg
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            wa = a[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
            wb = b[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1]
            out[y, x] = wa.mean() * guide[y, x] + wb.mean()
    return out


def ssim_direct(a, b, side=11, sigma=1.5, k1=0.01, k2=0.03, dynamic_range=1.0):
    """SSIM of two single-channel images, one explicit weighted window at a time."""
    centre = (side - 1) / 2.0
    g = np.array([[math.exp(-((i - centre) ** 2 + (j - centre) ** 2) / (2 * sigma * sigma))
                   for j in range(side)] for i in range(side)])
    g /= g.sum()
    c1, c2 = (k1 * dynamic_range) ** 2, (k2 * dynamic_range) ** 2
    h, w = a.shape
    vals = []
    for y in range(h - side + 1):
        for x in range(w - side + 1):
            wa = a[y:y + side, x:x + side]
            wb = b[y:y + side, x:x + side]
            ma, mb = (g * wa).sum(), (g * wb).sum()
            va = (g * (wa - ma) ** 2).sum()
            vb = (g * (wb - mb) ** 2).sum()
            cov = (g * (wa - ma) * (wb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2))
                        / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def luma(img):
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def central_difference(f, arr, index, step=1e-4):
    """d f / d arr[index] by central differences; restores ``arr`` afterwards."""
    orig = arr[index]
    arr[index] = orig + step
    up = f()
    arr[index] = orig - step
    down = f()
    arr[index] = orig
    return (up - down) / (2 * step)


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
