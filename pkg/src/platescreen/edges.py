"""Gradient, Canny and Laplacian-of-Gaussian edge detection.

All convolutions accumulate kernel taps in row-major order onto a zero
array, and scalar reductions use math.fsum (exactly rounded, order
independent). That fixes the floating-point result bit for bit, so an
independent per-pixel reimplementation reproduces it exactly (the oracle
tests rely on this).
"""

from math import fsum

import numpy as np
from scipy import ndimage

from .validation import check_image_2d

TAN_22_5 = 0.4142135623730951
TAN_67_5 = 2.414213562373095


def correlate2d_replicate(img, kernel):
    """2-D correlation with edge replication and row-major tap order."""
    img = check_image_2d(img)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode="edge")
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            out += kernel[i, j] * padded[i : i + h, j : j + w]
    return out


def gaussian_kernel(sigma, radius=None):
    """Normalized kernel h(i,j) = exp(-(i^2+j^2) / 2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    ij = np.arange(-radius, radius + 1, dtype=np.float64)
    sq = ij[:, None] ** 2 + ij[None, :] ** 2
    k = np.exp(-sq / (2.0 * sigma * sigma))
    return k / fsum(k.ravel())


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = np.array([[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]])


def sobel_gradients(img):
    """(gx, gy) via 3x3 Sobel correlation; x runs along columns, y along rows."""
    gx = correlate2d_replicate(img, SOBEL_X)
    gy = correlate2d_replicate(img, SOBEL_Y)
    return gx, gy


def nearest_rank(values, pct):
    """Nearest-rank percentile of a 1-D multiset (deterministic, oracle-checkable)."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("cannot take a percentile of an empty set")
    rank = int(np.ceil(pct / 100.0 * v.size))
    rank = min(max(rank, 1), v.size)
    return v[rank - 1]


def _quantized_neighbors(gx, gy):
    """Gradient direction quantized to one of four axes.

    Returns (dy1, dx1, dy2, dx2) offset arrays of the two pixels to compare
    against during non-maximum suppression. Uses |gy| / |gx| ratio tests
    instead of atan2 so the result only depends on comparisons.
    """
    ax, ay = np.abs(gx), np.abs(gy)
    horiz = ay <= TAN_22_5 * ax
    vert = ay >= TAN_67_5 * ax
    diag = ~(horiz | vert)
    diag_main = diag & (gx * gy > 0)  # along (+1,+1) / (-1,-1)
    diag_anti = diag & ~diag_main

    dy = np.zeros(gx.shape, dtype=np.int64)
    dx = np.zeros(gx.shape, dtype=np.int64)
    dx[horiz] = 1
    dy[vert] = 1
    dy[diag_main] = 1
    dx[diag_main] = 1
    dy[diag_anti] = 1
    dx[diag_anti] = -1
    return dy, dx


def canny(img, sigma=1.0, low_pct=70.0, high_pct=90.0):
    """Binary Canny edge map.

    Smoothing with a Gaussian of the given sigma, Sobel gradients,
    non-maximum suppression along the quantized gradient direction, then
    hysteresis with thresholds at the given nearest-rank percentiles of the
    positive gradient magnitudes.
    """
    img = check_image_2d(img)
    smoothed = correlate2d_replicate(img, gaussian_kernel(sigma))
    gx, gy = sobel_gradients(smoothed)
    mag = np.sqrt(gx * gx + gy * gy)

    positive = mag[mag > 0]
    if positive.size == 0:
        return np.zeros(img.shape, dtype=bool)
    t_low = nearest_rank(positive, low_pct)
    t_high = nearest_rank(positive, high_pct)

    h, w = img.shape
    padded = np.pad(mag, 1, mode="constant")
    dy, dx = _quantized_neighbors(gx, gy)
    yy, xx = np.mgrid[0:h, 0:w]
    n1 = padded[1 + yy + dy, 1 + xx + dx]
    n2 = padded[1 + yy - dy, 1 + xx - dx]
    ridge = (mag >= n1) & (mag >= n2) & (mag > 0)

    weak = ridge & (mag >= t_low)
    strong = ridge & (mag >= t_high)
    if not strong.any():
        return np.zeros(img.shape, dtype=bool)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return keep[labels]


def log_kernel(sigma=1.0, size=5):
    """Zero-sum Laplacian-of-Gaussian kernel."""
    r = size // 2
    ij = np.arange(-r, r + 1, dtype=np.float64)
    sq = ij[:, None] ** 2 + ij[None, :] ** 2
    s2 = sigma * sigma
    k = (sq - 2.0 * s2) / (s2 * s2) * np.exp(-sq / (2.0 * s2))
    return k - fsum(k.ravel()) / k.size


def log_edges(img, sigma=1.0, size=5, gate_frac=0.01):
    """Zero-crossing edge map of the Laplacian-of-Gaussian response.

    A pixel is an edge when its response is positive and a 4-neighbor is
    negative with a response step of at least ``gate_frac`` times the full
    response range.
    """
    img = check_image_2d(img)
    resp = correlate2d_replicate(img, log_kernel(sigma, size))
    gate = gate_frac * (resp.max() - resp.min())
    if gate <= 0:
        return np.zeros(img.shape, dtype=bool)
    padded = np.pad(resp, 1, mode="edge")
    h, w = img.shape
    center = padded[1 : 1 + h, 1 : 1 + w]
    edge = np.zeros(img.shape, dtype=bool)
    for oy, ox in ((0, 1), (2, 1), (1, 0), (1, 2)):
        nb = padded[oy : oy + h, ox : ox + w]
        edge |= (center > 0) & (nb < 0) & (center - nb >= gate)
    return edge
