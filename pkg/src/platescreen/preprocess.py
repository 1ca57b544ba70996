"""Stream preprocessing: frame selection, channel combination, smoothing, normalization."""

import numpy as np

from .edges import correlate2d_replicate, gaussian_kernel, nearest_rank
from .errors import DegenerateSpreadError, EmptySelectionError
from .imagemodel import ImageStream
from .validation import check_image_2d

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def select_frames(stream, keep):
    """Sub-stream of the frames in ``keep`` (an index iterable or a predicate).

    Original order is preserved; the dropped index set is recorded in the
    result's metadata. An empty selection is an error.
    """
    n = stream.n_frames
    if callable(keep):
        kept = [k for k in range(n) if keep(k)]
    else:
        idx = sorted(set(int(k) for k in keep))
        bad = [k for k in idx if k < 0 or k >= n]
        if bad:
            raise IndexError(f"frame indices out of range: {bad}")
        kept = idx
    if not kept:
        raise EmptySelectionError("frame selection is empty")
    dropped = sorted(set(range(n)) - set(kept))
    meta = dict(stream.meta)
    meta["dropped_frames"] = dropped
    meta["kept_frames"] = kept
    return ImageStream(
        data=stream.data[kept], frame_rate_hz=stream.frame_rate_hz, meta=meta
    )


def stimulus_exclusion_indices(
    n_frames, stimulus_windows=((249, 299), (649, 699)), drop_first=3
):
    """Kept frame indices for a stimulus recording.

    Drops the first ``drop_first`` frames (detector warm-up) and every frame
    inside the inclusive 0-based stimulus windows (camera saturated there).
    Returns the sorted kept list.
    """
    dropped = set(range(min(drop_first, n_frames)))
    for lo, hi in stimulus_windows:
        dropped.update(range(max(lo, 0), min(hi, n_frames - 1) + 1))
    return [k for k in range(n_frames) if k not in dropped]


def to_gray(stream):
    """Average the channels to one gray channel (rounded arithmetic mean)."""
    if stream.n_channels == 1:
        return stream
    if stream.n_channels != 3:
        raise ValueError(f"expected 1 or 3 channels, got {stream.n_channels}")
    mean = stream.data.astype(np.float64).mean(axis=-1)
    gray = np.floor(mean + 0.5).astype(np.uint8)[..., None]
    return ImageStream(
        data=gray, frame_rate_hz=stream.frame_rate_hz, meta=dict(stream.meta)
    )


def normalize_affine(img, q, v):
    """Elementwise (img - q) / v as float64."""
    img = check_image_2d(img)
    if v == 0:
        raise DegenerateSpreadError("spread parameter v is zero")
    return (img - q) / v


def normalize_meanstd(img):
    """Center by the mean, scale by the sample standard deviation."""
    img = check_image_2d(img)
    q = img.mean()
    v = img.std(ddof=1)
    if v == 0:
        raise DegenerateSpreadError("constant image: standard deviation is zero")
    return normalize_affine(img, q, v)


def normalize_minmax(img):
    """Map the intensity range [min, max] onto [0, 1]."""
    img = check_image_2d(img)
    q = img.min()
    v = img.max() - q
    if v == 0:
        raise DegenerateSpreadError("constant image: min equals max")
    return normalize_affine(img, q, v)


def normalize_saturating(img, low_pct=2.0, high_pct=98.0):
    """Contrast stretch that saturates a fixed percentage of pixels.

    The low/high thresholds are nearest-rank intensity percentiles. Pixels at
    or below the low threshold map to 0, at or above the high threshold to 1,
    linear in between.
    """
    if not 0 <= low_pct < high_pct <= 100:
        raise ValueError("need 0 <= low_pct < high_pct <= 100")
    img = check_image_2d(img)
    t_low = nearest_rank(img, low_pct)
    t_high = nearest_rank(img, high_pct)
    if t_low == t_high:
        raise DegenerateSpreadError("saturation thresholds coincide (near-constant image)")
    out = (img - t_low) / (t_high - t_low)
    out[img <= t_low] = 0.0
    out[img >= t_high] = 1.0
    return out


def requantize_8bit(img01):
    """Round a [0, 1] image back to uint8 for display."""
    arr = np.asarray(img01, dtype=np.float64)
    return np.clip(np.floor(arr * 255.0 + 0.5), 0, 255).astype(np.uint8)


def validity_mean_gate(img, lo, hi):
    """True (pass) iff the mean intensity lies inside [lo, hi].

    Empty wells show up far brighter than filled ones, so a plain mean gate
    sorts them out before any further processing.
    """
    img = check_image_2d(img)
    return bool(lo <= img.mean() <= hi)


def gaussian_smooth(img, sigma=0.5):
    """3x3 Gaussian smoothing with edge replication."""
    return correlate2d_replicate(img, gaussian_kernel(sigma, radius=1))


def sharpness_score(img):
    """Focus measure: variance of the 3x3 Laplacian response."""
    resp = correlate2d_replicate(img, LAPLACIAN_3X3)
    return float(resp.var())


def select_sharpest_plane(stack):
    """Index of the plane with the highest sharpness score; ties -> lowest index."""
    planes = list(stack)
    if not planes:
        raise ValueError("stack must contain at least one plane")
    scores = [sharpness_score(p) for p in planes]
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


def frame_mean_series(stream, plane=0):
    """Mean intensity of every frame (gray value of the first channel)."""
    data = stream.data[:, plane, :, :, 0].astype(np.float64)
    return data.reshape(stream.n_frames, -1).mean(axis=1)


def brightness_valid_frames(stream, factor=1.25, bootstrap_n=10, plane=0):
    """Boolean mask of frames not overexposed relative to a reference mean.

    The reference is the median frame mean of the first ``bootstrap_n``
    frames; frames brighter than ``factor`` times the reference fail.
    """
    means = frame_mean_series(stream, plane=plane)
    ref = float(np.median(means[: min(bootstrap_n, len(means))]))
    return means <= factor * ref
