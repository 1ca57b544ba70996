"""Egg segmentation and tracking.

Single eggs are isolated by bisecting a global threshold until the largest
blob matches the expected size and roundness. Multi-egg scenes go through
Canny edges and a circle-vote accumulator over the expected shell radii;
hits are then tracked frame to frame by correlating an ideal ring template
with the local edge map, which cannot drift because only the shell is a
circle.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.measure import perimeter as crofton_perimeter

from .edges import canny, correlate2d_replicate, gaussian_kernel, sobel_gradients
from .validation import check_image_2d, check_same_shape

MEAN_GRAY_MIN = 50.0
MEAN_GRAY_MAX = 200.0


@dataclass
class CircleHit:
    """One detected circle: center, radius, accumulator votes, interior mean."""

    cx: int
    cy: int
    r: int
    score: float
    mean_gray: float


@dataclass
class TrackedEgg:
    """Per-frame center trajectory of one egg; the radius stays fixed."""

    egg_id: int
    radius: int
    centers: np.ndarray  # (n_frames, 2) int, (cx, cy)
    valid: np.ndarray  # (n_frames,) bool, False when the match hit the window border
    alive: bool = True  # False after too many consecutive border hits


@dataclass
class SingleEggResult:
    valid: bool
    mask: np.ndarray | None = None  # bool, full image size
    bbox: tuple | None = None  # (y0, y1, x0, x1), half-open
    threshold: float | None = None
    area: int = 0
    roundness: float = 0.0
    reason: str = ""


def blob_roundness(mask):
    """4 pi area / perimeter^2 of a binary blob (1.0 for an ideal disc)."""
    area = int(np.count_nonzero(mask))
    if area == 0:
        return 0.0
    p = crofton_perimeter(mask)
    if p == 0:
        return 1.0
    return float(4.0 * np.pi * area / (p * p))


def _largest_component(binary):
    labels, n = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    if n == 0:
        return None
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    return labels == int(np.argmax(counts))


def segment_single_egg(
    img, target_area_px, roundness_min=0.7, tol_pct=20.0, max_iter=16
):
    """Isolate a single dark egg by threshold bisection.

    The global threshold is adjusted until the largest foreground component
    (pixels <= threshold) has an area within +-tol_pct of the target and a
    roundness of at least ``roundness_min``. Failure to converge marks the
    well invalid instead of raising.
    """
    img = check_image_2d(img)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    lo_area = target_area_px * (1.0 - tol_pct / 100.0)
    hi_area = target_area_px * (1.0 + tol_pct / 100.0)
    lo, hi = float(img.min()), float(img.max())
    best = SingleEggResult(valid=False, reason="no component within tolerance")
    for _ in range(max_iter):
        t = 0.5 * (lo + hi)
        mask = _largest_component(img <= t)
        if mask is None:
            lo = t  # nothing dark enough yet, raise the threshold
            continue
        area = int(np.count_nonzero(mask))
        if area > hi_area:
            hi = t
            continue
        if area < lo_area:
            lo = t
            continue
        rnd = blob_roundness(mask)
        if rnd < roundness_min:
            # merged or ragged blob: peel it apart with a lower threshold
            hi = t
            best = SingleEggResult(valid=False, reason="roundness below minimum")
            continue
        ys, xs = np.nonzero(mask)
        bbox = (int(ys.min()), int(ys.max()) + 1, int(xs.min()), int(xs.max()) + 1)
        return SingleEggResult(
            valid=True, mask=mask, bbox=bbox, threshold=t, area=area, roundness=rnd
        )
    return best


def circle_offsets(r):
    """Unique integer (dy, dx) offsets approximating a circle of radius r."""
    n = max(int(np.ceil(2.0 * np.pi * r)) * 2, 8)
    ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    dy = np.floor(r * np.sin(ang) + 0.5).astype(np.int64)
    dx = np.floor(r * np.cos(ang) + 0.5).astype(np.int64)
    return np.unique(np.stack([dy, dx], axis=1), axis=0)


def hough_accumulate(edge_map, r_min, r_max):
    """Vote accumulator A[r - r_min, y, x] over full circles per edge pixel."""
    edge_map = np.asarray(edge_map, dtype=bool)
    h, w = edge_map.shape
    radii = np.arange(r_min, r_max + 1)
    acc = np.zeros((len(radii), h, w), dtype=np.int64)
    ys, xs = np.nonzero(edge_map)
    if ys.size == 0:
        return acc, radii
    for ri, r in enumerate(radii):
        off = circle_offsets(r)
        cy = ys[:, None] + off[None, :, 0]
        cx = xs[:, None] + off[None, :, 1]
        ok = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        flat = cy[ok] * w + cx[ok]
        acc[ri] = np.bincount(flat, minlength=h * w).reshape(h, w)
    return acc, radii


def disc_mean_gray(img, cx, cy, r):
    """Mean intensity inside the circle; NaN when the disc is fully outside."""
    h, w = img.shape
    x0, x1 = max(int(cx - r), 0), min(int(cx + r) + 1, w)
    y0, y1 = max(int(cy - r), 0), min(int(cy + r) + 1, h)
    if x0 >= x1 or y0 >= y1:
        return float("nan")
    yy, xx = np.mgrid[y0:y1, x0:x1]
    disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    if not disc.any():
        return float("nan")
    return float(img[y0:y1, x0:x1][disc].mean())


def detect_eggs_hough(
    img,
    r_min=20,
    r_max=30,
    accum_threshold=500,
    mean_gray_bounds=(MEAN_GRAY_MIN, MEAN_GRAY_MAX),
    canny_sigma=1.0,
):
    """Detect egg shells as circles of radius r_min..r_max.

    Pipeline: Canny edge map, circle votes into a (radius, y, x) accumulator,
    non-maximum suppression of the radius-summed vote matrix, vote-centroid
    refinement of each candidate center, then a score threshold. Conflicting
    centers closer than 90% of the typical egg diameter are resolved by
    discarding the brighter-interior hit; finally hits with out-of-bounds
    circles or implausible interior brightness are dropped.

    The threshold counts raw accumulator votes, so it scales with how much of
    each shell the edge detector recovers (thin clean shells yield roughly
    the circle circumference per visible edge).
    """
    if r_min > r_max:
        raise ValueError("r_min must be <= r_max")
    img = check_image_2d(img)
    edge_map = canny(img, sigma=canny_sigma)
    acc, radii = hough_accumulate(edge_map, r_min, r_max)

    # votes of a coherent circle concentrate in one radius slice around its
    # center; pooling 3x3 spatially per radius and taking the best slice
    # keeps that peak sharp, while stray arc interference spreads thin
    box = np.ones((1, 3, 3), dtype=np.int64)
    pooled = ndimage.convolve(acc, box, mode="constant")
    sharp = pooled.max(axis=0)
    best_r = pooled.argmax(axis=0)

    # non-maximum suppression with an egg-sized footprint (egg centers are
    # at least one diameter apart)
    footprint = 2 * r_min + 1
    local_max = sharp == ndimage.maximum_filter(sharp, size=footprint, mode="constant")
    candidates = np.argwhere(local_max & (sharp >= accum_threshold))

    hits = []
    for y, x in candidates:
        r = int(radii[best_r[y, x]])
        hits.append(
            CircleHit(
                cx=int(x),
                cy=int(y),
                r=r,
                score=float(sharp[y, x]),
                mean_gray=disc_mean_gray(img, int(x), int(y), r),
            )
        )

    # plateau ties of the maximum filter: keep the strongest per neighborhood
    hits = _merge_duplicate_centers(hits, min_dist=float(r_min))
    typical_d = 2.0 * np.median([h.r for h in hits]) if hits else 2.0 * r_min
    hits = _resolve_conflicts(hits, 0.9 * typical_d)

    h, w = img.shape
    lo, hi = mean_gray_bounds
    kept = []
    for hit in hits:
        inside = (
            hit.cx - hit.r >= 0
            and hit.cy - hit.r >= 0
            and hit.cx + hit.r < w
            and hit.cy + hit.r < h
        )
        if not inside:
            continue
        if not np.isfinite(hit.mean_gray) or not lo <= hit.mean_gray <= hi:
            continue
        kept.append(hit)
    kept.sort(key=lambda t: (-t.score, t.cy, t.cx))
    return kept


def _merge_duplicate_centers(hits, min_dist):
    """Greedily keep the strongest hit among centers closer than min_dist."""
    hits = sorted(hits, key=lambda t: (-t.score, t.cy, t.cx))
    out = []
    for hit in hits:
        if all(np.hypot(hit.cx - o.cx, hit.cy - o.cy) >= min_dist for o in out):
            out.append(hit)
    return out


def _resolve_conflicts(hits, min_center_dist):
    """Repeatedly drop the brightest-interior hit involved in any conflict.

    A conflict is a pair of centers closer than min_center_dist; hits that
    plausibly miss the dark larva (high interior mean) go first.
    """
    hits = list(hits)
    while True:
        conflicted = set()
        for i in range(len(hits)):
            for j in range(i + 1, len(hits)):
                d = np.hypot(hits[i].cx - hits[j].cx, hits[i].cy - hits[j].cy)
                if d < min_center_dist:
                    conflicted.update((i, j))
        if not conflicted:
            return hits
        worst = max(
            (hits[i] for i in conflicted),
            key=lambda t: np.nan_to_num(t.mean_gray, nan=255.0),
        )
        hits.remove(worst)


def ring_template(r):
    """Offsets of an ideal one-pixel ring of radius r (the tracking template)."""
    return circle_offsets(r)


def track_eggs(
    stream,
    initial,
    search_window=4,
    smoothing_sigma=1.0,
    plane=0,
    max_border_run=30,
):
    """Track initial circle hits through the stream by ring-edge correlation.

    At every frame the ring template of each egg is scored against the local
    gradient-magnitude edge map at all shifts within the search window; the
    best shift moves the egg. Only the shell is a circle, so the correlation
    cannot drift onto the larva. Ties prefer the smallest displacement. A
    maximum on the window border flags the frame invalid, and
    ``max_border_run`` consecutive border hits retire the egg.
    """
    if search_window < 1:
        raise ValueError("search_window must be >= 1")
    n = stream.n_frames
    eggs = []
    for idx, hit in enumerate(initial):
        centers = np.zeros((n, 2), dtype=int)
        centers[0] = (hit.cx, hit.cy)
        eggs.append(
            TrackedEgg(
                egg_id=idx,
                radius=int(hit.r),
                centers=centers,
                valid=np.ones(n, dtype=bool),
            )
        )

    w_img, h_img = stream.width, stream.height
    shifts = [
        (dx, dy)
        for dy in range(-search_window, search_window + 1)
        for dx in range(-search_window, search_window + 1)
    ]
    shifts.sort(key=lambda s: (abs(s[0]) + abs(s[1]), s))
    border_runs = [0] * len(eggs)
    smooth_kernel = gaussian_kernel(smoothing_sigma)

    for k in range(1, n):
        frame = stream.frame(k, plane=plane)
        if frame.ndim == 3:
            frame = frame.mean(axis=-1)
        for egg in eggs:
            if not egg.alive:
                egg.centers[k] = egg.centers[k - 1]
                egg.valid[k] = False
                continue
            cx, cy = egg.centers[k - 1]
            r = egg.radius
            pad = r + search_window + 2
            x0, x1 = cx - pad, cx + pad + 1
            y0, y1 = cy - pad, cy + pad + 1
            cx0, cy0 = max(x0, 0), max(y0, 0)
            crop = frame[cy0 : min(y1, h_img), cx0 : min(x1, w_img)]
            smoothed = correlate2d_replicate(
                np.asarray(crop, dtype=np.float64), smooth_kernel
            )
            gx, gy = sobel_gradients(smoothed)
            edge_map = np.sqrt(gx * gx + gy * gy)
            off = ring_template(r)
            best_score, best_shift = -1.0, (0, 0)
            ch, cw = edge_map.shape
            for dx, dy in shifts:
                ys = (cy - cy0) + dy + off[:, 0]
                xs = (cx - cx0) + dx + off[:, 1]
                ok = (ys >= 0) & (ys < ch) & (xs >= 0) & (xs < cw)
                score = float(edge_map[ys[ok], xs[ok]].sum())
                if score > best_score:
                    best_score, best_shift = score, (dx, dy)
            dx, dy = best_shift
            egg.centers[k] = (cx + dx, cy + dy)
            on_border = max(abs(dx), abs(dy)) == search_window
            egg.valid[k] = not on_border
            i = egg.egg_id
            border_runs[i] = border_runs[i] + 1 if on_border else 0
            if border_runs[i] > max_border_run:
                egg.alive = False
    return eggs


def fine_align(prev_crop, cur_crop, max_shift=2):
    """Translation (dx, dy) of the content from prev_crop to cur_crop.

    Exhaustive search over [-max_shift, max_shift]^2 minimizing the sum of
    absolute differences on the overlapping region; ties prefer the smallest
    |dx|+|dy|, then lexicographic (dx, dy). A return of (1, -2) means the
    content moved one pixel right and two up.
    """
    prev_crop, cur_crop = check_same_shape(prev_crop, cur_crop, ("prev_crop", "cur_crop"))
    if max_shift < 0:
        raise ValueError("max_shift must be >= 0")
    a = np.asarray(prev_crop, dtype=np.float64)
    b = np.asarray(cur_crop, dtype=np.float64)
    h, w = a.shape
    best = None
    candidates = [
        (dx, dy)
        for dy in range(-max_shift, max_shift + 1)
        for dx in range(-max_shift, max_shift + 1)
    ]
    candidates.sort(key=lambda s: (abs(s[0]) + abs(s[1]), s))
    for dx, dy in candidates:
        # content translated by (dx, dy): cur(y + dy, x + dx) == prev(y, x)
        bx0, bx1 = max(dx, 0), w + min(dx, 0)
        by0, by1 = max(dy, 0), h + min(dy, 0)
        ax0, ax1 = max(-dx, 0), w + min(-dx, 0)
        ay0, ay1 = max(-dy, 0), h + min(-dy, 0)
        sad = float(np.abs(a[ay0:ay1, ax0:ax1] - b[by0:by1, bx0:bx1]).sum())
        if best is None or sad < best[0]:
            best = (sad, (dx, dy))
    return best[1]


def difference_image(a, b):
    """Elementwise |a - b| as float64 (motion image of two frames)."""
    a, b = check_same_shape(a, b)
    return np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))


def roi_mask_circle(crop, cx, cy, r):
    """Zero all pixels outside the circle (cx, cy, r). The center must be inside."""
    crop = np.asarray(crop)
    h, w = crop.shape
    if not (0 <= cx < w and 0 <= cy < h):
        raise ValueError("circle center must lie within the crop")
    if r < 0:
        raise ValueError("radius must be >= 0")
    yy, xx = np.mgrid[0:h, 0:w]
    disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
    out = np.zeros_like(crop)
    out[disc] = crop[disc]
    return out
