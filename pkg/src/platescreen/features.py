"""Instantaneous (x1..x8) and motion (x9..x17) features plus aggregation.

Scalar reductions use math.fsum, which is exactly rounded and therefore
independent of summation order; an independent loop-based oracle reproduces
every feature bit for bit. Invalid entries (e.g. a division guard tripped)
carry value 0.0 and a False validity flag so vectors stay finite.
"""

from dataclasses import dataclass
from math import fsum, sqrt

import numpy as np

from .edges import canny, log_edges, nearest_rank
from .errors import NoDataError
from .preprocess import gaussian_smooth
from .segment import difference_image, fine_align, roi_mask_circle
from .validation import check_image_2d, check_same_shape

INSTANT_NAMES = tuple(f"x{i}" for i in range(1, 9))
MOTION_NAMES = tuple(f"x{i}" for i in range(9, 18))
FEATURE_NAMES = INSTANT_NAMES + MOTION_NAMES

AGGREGATIONS = ("MAX", "MEAN", "MEDIAN")


@dataclass
class FeatureVector:
    """Named feature values with a per-entry validity mask."""

    values: dict
    valid: dict

    def __getitem__(self, name):
        return self.values[name]

    def is_valid(self, name):
        return self.valid[name]

    def merged(self, other):
        return FeatureVector(
            values={**self.values, **other.values},
            valid={**self.valid, **other.valid},
        )


def rd(v):
    """Round half away from zero (the convention used by the feature formulas)."""
    return int(np.floor(v + 0.5))


def _as_intensity(img, name="img"):
    arr = check_image_2d(img, name)
    if not np.all(arr == np.floor(arr)):
        raise ValueError(f"{name} must hold integer intensities")
    if arr.min() < 0:
        raise ValueError(f"{name} intensities must be >= 0")
    return arr


def histogram_centroid(img, phi=255):
    """x1: centroid of the intensity histogram."""
    img = _as_intensity(img)
    counts = np.bincount(img.astype(np.int64).ravel(), minlength=phi + 1)
    total = fsum(float(c) for c in counts)
    weighted = fsum(float(i) * float(c) for i, c in enumerate(counts))
    return weighted / total


def mean_nonzero_gray(img):
    """x2: mean gray over non-background pixels (background encoded as 0)."""
    img = _as_intensity(img)
    n_zero = int(np.count_nonzero(img == 0))
    denom = img.size - n_zero
    if denom == 0:
        return 0.0, False
    return fsum(float(v) for v in img.ravel()) / denom, True


def _center_row_segment(img):
    h, w = img.shape
    row = img[h // 2]
    n1 = max(rd(0.3 * w), 1)
    n2 = min(rd(0.7 * w), w)
    n2 = max(n2, n1)
    return row[n1 - 1 : n2], n1, n2


def center_row_mean(img):
    """x3: mean gray of the central section of the middle image row."""
    img = _as_intensity(img)
    seg, n1, n2 = _center_row_segment(img)
    return fsum(float(v) for v in seg) / (n2 - n1 + 1)


def center_row_variation(img, c=None):
    """x4: summed absolute deviation from c along the middle-row section.

    ``c`` defaults to the section mean (x3).
    """
    img = _as_intensity(img)
    seg, _, _ = _center_row_segment(img)
    if c is None:
        c = center_row_mean(img)
    return fsum(abs(float(v) - c) for v in seg)


def iso_data_threshold(img, tol=0.5, max_iter=100):
    """Iterative intensity threshold: midpoint of the two class means."""
    img = _as_intensity(img)
    flat = img.ravel()
    if flat.min() == flat.max():
        return None
    t = fsum(float(v) for v in flat) / flat.size
    for _ in range(max_iter):
        low = flat[flat <= t]
        high = flat[flat > t]
        if low.size == 0 or high.size == 0:
            break
        m_low = fsum(float(v) for v in low) / low.size
        m_high = fsum(float(v) for v in high) / high.size
        t_new = 0.5 * (m_low + m_high)
        if abs(t_new - t) < tol:
            return t_new
        t = t_new
    return t


def ellipse_axis_spread(img):
    """x7: difference of the enclosing-ellipse axis lengths of the dark object.

    The object is the pixel set at or below the iso-data threshold;
    axis lengths follow from its second central moments.
    """
    img = _as_intensity(img)
    t = iso_data_threshold(img)
    if t is None:
        return 0.0
    ys, xs = np.nonzero(img <= t)
    n = xs.size
    if n == 0:
        return 0.0
    mx = fsum(float(v) for v in xs) / n
    my = fsum(float(v) for v in ys) / n
    m11 = fsum((float(x) - mx) ** 2 for x in xs) / n
    m22 = fsum((float(y) - my) ** 2 for y in ys) / n
    m12 = fsum((float(x) - mx) * (float(y) - my) for x, y in zip(xs, ys)) / n
    disc = sqrt(max((m11 - m22) ** 2 + 4.0 * m12 * m12, 0.0))
    m_max = 2.0 * sqrt(2.0) * sqrt(max(m11 + m22 + disc, 0.0))
    m_min = 2.0 * sqrt(2.0) * sqrt(max(m11 + m22 - disc, 0.0))
    return m_max - m_min


def instantaneous_features(img, phi=255):
    """x1..x8 of one segmented single-channel image."""
    img = _as_intensity(img)
    values = {}
    valid = {name: True for name in INSTANT_NAMES}

    values["x1"] = histogram_centroid(img, phi=phi)
    values["x2"], valid["x2"] = mean_nonzero_gray(img)
    values["x3"] = center_row_mean(img)
    values["x4"] = center_row_variation(img, c=values["x3"])
    values["x5"] = float(np.count_nonzero(canny(img)))
    values["x6"] = float(np.count_nonzero(log_edges(img)))
    values["x7"] = ellipse_axis_spread(img)
    values["x8"] = float(img.shape[0] * img.shape[1])
    return FeatureVector(values=values, valid=valid)


def trimmed_motion_threshold(diff, c_quantile=0.4):
    """Dynamic motion threshold from quantile-trimmed difference statistics.

    Keeps pixels strictly between the c- and (1-c)-quantile values of the
    difference image, normalizes mean and spread by (1-c)*N - 1 as the
    formulas prescribe, and returns mean + 3 * spread.
    """
    flat = np.asarray(diff, dtype=np.float64).ravel()
    n = flat.size
    q_lo = nearest_rank(flat, 100.0 * c_quantile)
    q_hi = nearest_rank(flat, 100.0 * (1.0 - c_quantile))
    kept = flat[(flat > q_lo) & (flat < q_hi)]
    denom = (1.0 - c_quantile) * n - 1.0
    if denom <= 0:
        return 0.0
    mean_star = fsum(float(v) for v in kept) / denom
    spread_star = fsum((float(v) - mean_star) ** 2 for v in kept) / denom
    return mean_star + 3.0 * spread_star


def motion_features(
    frame_k, frame_km1, x_off=1.0, c_quantile=0.4, phi=255, x9_sqrt=False
):
    """x9..x17 of a consecutive frame pair.

    ``x9_sqrt`` switches x9 (and its use inside x16) from the printed
    variance-form expression to its square root.
    """
    a = _as_intensity(frame_k, "frame_k")
    b = _as_intensity(frame_km1, "frame_km1")
    check_same_shape(a, b, ("frame_k", "frame_km1"))
    diff = difference_image(a, b)
    n = diff.size
    values = {}
    valid = {name: True for name in MOTION_NAMES}

    total = fsum(float(v) for v in diff.ravel())
    mean_d = total / n
    if n > 1:
        x9 = fsum((float(v) - mean_d) ** 2 for v in diff.ravel()) / (n - 1)
        if x9_sqrt:
            x9 = sqrt(x9)
    else:
        x9, valid["x9"] = 0.0, False
    values["x9"] = x9
    values["x10"] = total / (n * phi)

    i_max = np.maximum(a, b)
    ratio = diff / (i_max + x_off)
    values["x11"] = fsum(float(v) for v in ratio.ravel()) / n

    i_dyn = trimmed_motion_threshold(diff, c_quantile=c_quantile)
    values["x12"] = float(np.count_nonzero(diff > i_dyn))
    values["x13"] = float(np.count_nonzero(diff / n > i_dyn))
    values["x14"] = float(diff.max())
    values["x15"] = float(gaussian_smooth(diff, sigma=0.5).max())
    if values["x9"] > 0:
        values["x16"] = total / values["x9"]
    else:
        values["x16"], valid["x16"] = 0.0, False
    values["x17"] = total
    return FeatureVector(values=values, valid=valid)


def movement_index(
    tracked,
    stream,
    frames_valid=None,
    max_shift=2,
    plane=0,
):
    """Per-frame movement index of one tracked egg.

    For every consecutive frame pair the crops around the tracked centers are
    fine-aligned (residual shifts up to ``max_shift``) and masked with the
    egg's circular region; the index is the summed absolute pixel change
    normalized by the standard deviation of the crop's shell-interior
    intensities, which cancels the illumination falloff across the well.
    Frames without a usable pair (tracking invalid, stimulus-excluded, crop
    out of bounds or a contrast-free interior) yield NaN gap markers.
    """
    n = stream.n_frames
    index = np.full(n, np.nan)
    r = tracked.radius
    hs = r + max_shift
    size = 2 * hs + 1
    h_img, w_img = stream.height, stream.width

    def crop_at(k):
        cx, cy = tracked.centers[k]
        x0, y0 = cx - hs, cy - hs
        if x0 < 0 or y0 < 0 or x0 + size > w_img or y0 + size > h_img:
            return None
        img = stream.frame(k, plane=plane)
        if img.ndim == 3:
            img = np.floor(img.mean(axis=-1) + 0.5)
        return np.asarray(img[y0 : y0 + size, x0 : x0 + size], dtype=np.float64)

    for k in range(1, n):
        if frames_valid is not None and not (frames_valid[k] and frames_valid[k - 1]):
            continue
        if not (tracked.valid[k] and tracked.valid[k - 1]):
            continue
        prev_crop = crop_at(k - 1)
        cur_crop = crop_at(k)
        if prev_crop is None or cur_crop is None:
            continue
        dx, dy = fine_align(prev_crop, cur_crop, max_shift=max_shift)
        # contents moved by (dx, dy); sample cur shifted back onto prev's grid
        h, w = prev_crop.shape
        pa = prev_crop[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)]
        cb = cur_crop[max(dy, 0) : h + min(dy, 0), max(dx, 0) : w + min(dx, 0)]
        prev_full = np.zeros_like(prev_crop)
        cur_full = np.zeros_like(prev_crop)
        prev_full[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)] = pa
        cur_full[max(-dy, 0) : h + min(-dy, 0), max(-dx, 0) : w + min(-dx, 0)] = cb
        prev_roi = roi_mask_circle(prev_full, hs, hs, r)
        cur_roi = roi_mask_circle(cur_full, hs, hs, r)
        diff = np.abs(cur_roi - prev_roi)
        yy, xx = np.mgrid[0 : 2 * hs + 1, 0 : 2 * hs + 1]
        inside = (xx - hs) ** 2 + (yy - hs) ** 2 <= r * r
        spread = float(cur_roi[inside].std())
        if spread > 0:
            index[k] = float(diff.sum()) / spread
    return index


def series_to_long_csv(series_by_id, path):
    """Write per-frame series as long-format CSV rows (id, frame, value)."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["well_id", "frame", "value"])
        for series_id, series in series_by_id.items():
            for k, v in enumerate(np.asarray(series, dtype=np.float64)):
                writer.writerow([series_id, k, "" if np.isnan(v) else v])
    return path


def aggregate_series(series, op):
    """MAX / MEAN / MEDIAN of a series, ignoring NaN gap markers."""
    op = op.upper()
    if op not in AGGREGATIONS:
        raise ValueError(f"op must be one of {AGGREGATIONS}")
    arr = np.asarray(series, dtype=np.float64)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        raise NoDataError("series has no valid samples")
    if op == "MAX":
        return float(arr.max())
    if op == "MEAN":
        return float(arr.mean())
    return float(np.median(arr))


def aggregate_motion_series(series_by_name, ops=AGGREGATIONS):
    """Aggregate each named series with each operator: '{OP} x{i}' -> value."""
    out = {}
    for name, series in series_by_name.items():
        for op in ops:
            try:
                out[f"{op} {name}"] = aggregate_series(series, op)
            except NoDataError:
                continue
    return out
