"""Synthetic well sequences with known ground truth.

Renders a vignetted well containing drifting eggs (dark shell ring plus an
interior larva) and scripted movement events. The generator is a pure
function of its script, so identical seeds give bit-identical frames; the
returned ground truth drives segmentation, tracking and event-classification
tests.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import PlacementError
from .imagemodel import ImageStream

EVENT_KINDS = ("coiling", "swimming", "none")

STYLE_DEVELOPED = "developed"
STYLE_COAGULATED = "coagulated"
STYLE_EMPTY = "empty"


@dataclass
class EventSpec:
    """One scripted movement event of one egg."""

    egg: int
    start_frame: int
    duration_frames: int
    kind: str = "coiling"
    amplitude: float = 1.0

    @property
    def end_frame(self):
        return self.start_frame + self.duration_frames - 1


@dataclass
class SynthScript:
    n_eggs: int = 8
    n_frames: int = 100
    width: int = 250
    height: int = 250
    radius_range: tuple = (20, 30)
    drift_px_per_frame: int = 0
    events: list = field(default_factory=list)
    center_intensity: float = 255.0
    rim_intensity: float = 80.0
    noise_sigma: float = 0.0
    seed: int = 0
    frame_rate_hz: float = 30.0
    egg_styles: list | None = None  # per-egg style, default all developed
    interior_shade: float = 0.88  # shell-interior brightness relative to background

    def validate(self):
        if self.n_eggs < 0 or self.n_frames < 1:
            raise ValueError("need n_eggs >= 0 and n_frames >= 1")
        r_min, r_max = self.radius_range
        if not 1 <= r_min <= r_max:
            raise ValueError(f"bad radius range {self.radius_range}")
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ValueError(f"unknown event kind {ev.kind!r}")
            if not 0 <= ev.egg < self.n_eggs:
                raise ValueError(f"event egg {ev.egg} out of range")
            if ev.start_frame < 0 or ev.end_frame >= self.n_frames:
                raise ValueError(
                    f"event frames [{ev.start_frame}, {ev.end_frame}] outside "
                    f"[0, {self.n_frames - 1}]"
                )
        if self.egg_styles is not None and len(self.egg_styles) != self.n_eggs:
            raise ValueError("egg_styles length must equal n_eggs")


@dataclass
class GroundTruth:
    centers: np.ndarray  # (n_frames, n_eggs, 2) float, (cx, cy)
    radii: np.ndarray  # (n_eggs,) int
    events: list
    moving_px: np.ndarray  # (n_frames, n_eggs) int, 0 for frame 0
    styles: list
    frame_rate_hz: float

    def to_json(self):
        return {
            "centers": self.centers.tolist(),
            "radii": self.radii.tolist(),
            "events": [asdict(e) for e in self.events],
            "moving_px": self.moving_px.tolist(),
            "styles": list(self.styles),
            "frame_rate_hz": self.frame_rate_hz,
        }


def vignette_background(width, height, center=255.0, rim=80.0):
    """Radial illumination falloff: quadratic from the image center to the rim."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    r = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    r_well = min(width, height) / 2.0
    frac = np.minimum(r / r_well, 1.0)
    return center - (center - rim) * frac**2


def _place_eggs(rng, script):
    # same-age eggs in one well share a shell size up to ~1 px, so draw a
    # per-well base radius and jitter each egg around it
    r_min, r_max = script.radius_range
    if r_max - r_min >= 2:
        base = int(rng.integers(r_min + 1, r_max))
        radii = np.clip(
            base + rng.integers(-1, 2, size=script.n_eggs), r_min, r_max
        )
    else:
        radii = rng.integers(r_min, r_max + 1, size=script.n_eggs)
    centers = []
    margin = 2
    budget = 1000 * max(script.n_eggs, 1)
    for i in range(script.n_eggs):
        r = int(radii[i])
        for _ in range(budget):
            cx = rng.integers(r + margin, script.width - r - margin)
            cy = rng.integers(r + margin, script.height - r - margin)
            ok = True
            for (ox, oy), orad in zip(centers, radii[: len(centers)]):
                d = np.hypot(cx - ox, cy - oy)
                if d <= 2.0 * max(r, int(orad)) + margin:
                    ok = False
                    break
            if ok:
                centers.append((int(cx), int(cy)))
                break
        else:
            raise PlacementError(
                f"could not place egg {i} without overlap after {budget} tries"
            )
    return np.array(centers, dtype=np.float64).reshape(-1, 2), radii.astype(int)


def _paint_egg(frame, cx, cy, r, style, theta, wobble, interior_shade=0.88):
    """Paint one egg onto the frame in-place. Coordinates are float pixels."""
    h, w = frame.shape
    x0, x1 = int(np.floor(cx - r - 2)), int(np.ceil(cx + r + 3))
    y0, y1 = int(np.floor(cy - r - 2)), int(np.ceil(cy + r + 3))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, w), min(y1, h)
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    dx, dy = xx - cx, yy - cy
    dist = np.sqrt(dx * dx + dy * dy)
    patch = frame[y0:y1, x0:x1]

    # the shell and larva absorb light, so their shading is multiplicative
    # and keeps its contrast under the illumination falloff
    interior = dist < r - 2.5
    ring = (dist <= r) & ~interior
    if style == STYLE_EMPTY:
        patch[ring] *= 0.45
        return
    patch[interior] *= interior_shade
    patch[ring] *= 0.45

    if style == STYLE_COAGULATED:
        blob = dist < 0.62 * r
        patch[blob] *= 0.32
        return

    # developed: elongated larva with an off-axis head spot, rotated by theta
    ct, st = np.cos(theta), np.sin(theta)
    lx = ct * (dx - wobble[0]) + st * (dy - wobble[1])
    ly = -st * (dx - wobble[0]) + ct * (dy - wobble[1])
    a, b = 0.62 * r, 0.26 * r
    larva = (lx / a) ** 2 + (ly / b) ** 2 <= 1.0
    patch[larva] *= 0.38
    head = ((lx - 0.48 * a) / (0.42 * b)) ** 2 + (ly / (0.42 * b)) ** 2 <= 1.0
    patch[head] *= 0.55


def _event_state(events, n_frames, n_eggs):
    """Per-frame per-egg event kind ('' when idle)."""
    state = np.full((n_frames, n_eggs), "", dtype=object)
    for ev in events:
        if ev.kind == "none":
            continue
        state[ev.start_frame : ev.end_frame + 1, ev.egg] = ev.kind
    return state


COILING_STEP = 0.55  # rad/frame at amplitude 1
SWIMMING_STEP = 0.10


def render_sequence(script):
    """Render a script to (ImageStream, GroundTruth)."""
    script.validate()
    rng = np.random.default_rng(script.seed)
    background = vignette_background(
        script.width, script.height, script.center_intensity, script.rim_intensity
    )
    centers0, radii = _place_eggs(rng, script)
    styles = list(script.egg_styles or [STYLE_DEVELOPED] * script.n_eggs)
    thetas = rng.uniform(0, 2 * np.pi, size=script.n_eggs)
    amplitudes = {
        (ev.egg, k): ev.amplitude
        for ev in script.events
        for k in range(ev.start_frame, ev.end_frame + 1)
    }
    state = _event_state(script.events, script.n_frames, script.n_eggs)

    centers = np.zeros((script.n_frames, script.n_eggs, 2))
    moving_px = np.zeros((script.n_frames, script.n_eggs), dtype=int)
    frames = []
    pos = centers0.copy()
    prev_clean = None
    for k in range(script.n_frames):
        if k > 0 and script.drift_px_per_frame > 0 and script.n_eggs:
            step = rng.integers(
                -script.drift_px_per_frame,
                script.drift_px_per_frame + 1,
                size=(script.n_eggs, 2),
            )
            pos = pos + step
            for i in range(script.n_eggs):
                r = radii[i]
                pos[i, 0] = np.clip(pos[i, 0], r + 2, script.width - r - 3)
                pos[i, 1] = np.clip(pos[i, 1], r + 2, script.height - r - 3)
        for i in range(script.n_eggs):
            kind = state[k, i]
            amp = amplitudes.get((i, k), 1.0)
            if kind == "coiling":
                thetas[i] += COILING_STEP * amp
            elif kind == "swimming":
                thetas[i] += SWIMMING_STEP * amp

        clean = background.copy()
        for i in range(script.n_eggs):
            wobble = (0.0, 0.0)
            if state[k, i] == "swimming":
                wobble = (np.sin(0.7 * k) * 0.8, np.cos(0.7 * k) * 0.8)
            _paint_egg(
                clean, pos[i, 0], pos[i, 1], int(radii[i]), styles[i], thetas[i],
                wobble, interior_shade=script.interior_shade,
            )
        centers[k] = pos

        if k > 0:
            for i in range(script.n_eggs):
                cx, cy = pos[i]
                r = int(radii[i])
                x0, x1 = int(cx - r), int(cx + r + 1)
                y0, y1 = int(cy - r), int(cy + r + 1)
                x0, y0 = max(x0, 0), max(y0, 0)
                x1 = min(x1, script.width)
                y1 = min(y1, script.height)
                yy, xx = np.mgrid[y0:y1, x0:x1]
                disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                d = np.abs(clean[y0:y1, x0:x1] - prev_clean[y0:y1, x0:x1])
                moving_px[k, i] = int(np.count_nonzero(d[disc] > 0.5))
        prev_clean = clean

        noisy = clean
        if script.noise_sigma > 0:
            noisy = clean + rng.normal(0.0, script.noise_sigma, clean.shape)
        frames.append(np.clip(np.floor(noisy + 0.5), 0, 255).astype(np.uint8))

    stream = ImageStream.from_frames(
        frames, frame_rate_hz=script.frame_rate_hz, meta={"synthetic": True}
    )
    truth = GroundTruth(
        centers=centers,
        radii=radii,
        events=[e for e in script.events if e.kind != "none"],
        moving_px=moving_px,
        styles=styles,
        frame_rate_hz=script.frame_rate_hz,
    )
    return stream, truth


def render_single_well(style=STYLE_DEVELOPED, radius=24, size=120, seed=0, noise_sigma=3.0):
    """One-egg, one-frame well image for plate-level tests. Returns (image, truth).

    Single-organism wells are small and evenly lit, so the illumination
    falloff is kept mild compared to the full-well sequences.
    """
    script = SynthScript(
        n_eggs=1,
        n_frames=1,
        width=size,
        height=size,
        radius_range=(radius, radius),
        rim_intensity=215.0,
        interior_shade=0.72,
        noise_sigma=noise_sigma,
        seed=seed,
        egg_styles=[style],
    )
    stream, truth = render_sequence(script)
    return stream.frame(0), truth


def write_ground_truth(truth, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_json(), fh, indent=1)
