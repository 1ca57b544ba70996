"""Photomotor-response analysis: movement events, probabilities, phase durations.

Works on per-larva movement-index series (NaN entries mark excluded frames,
e.g. the stimulus windows). Events are threshold runs with hysteresis: a run
above the extent threshold counts as an event when it peaks above the peak
threshold; short runs are coilings, long ones swimmings.
"""

from dataclasses import dataclass

import numpy as np

REFERENCE_FRAME_RATE = 30.03
COILING_MAX_FRAMES_AT_REFERENCE = 40


@dataclass
class PmrEvent:
    egg_id: int
    kind: str  # "coiling" | "swimming"
    start_frame: int
    end_frame: int  # inclusive
    peak_value: float

    @property
    def duration(self):
        return self.end_frame - self.start_frame + 1

    def covers(self, frame):
        return self.start_frame <= frame <= self.end_frame

    def to_json(self):
        return {
            "egg_id": self.egg_id,
            "kind": self.kind,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "peak_value": self.peak_value,
        }


@dataclass
class PmrPhases:
    """Reaction and excitation phases of one egg, in seconds; None = no data."""

    reaction_time_s: float | None
    excitation1_s: float | None
    excitation2_s: float | None


def coiling_frame_limit(frame_rate_hz):
    """Maximum coiling duration in frames, rescaled from the reference rate."""
    return max(
        1,
        int(
            np.floor(
                COILING_MAX_FRAMES_AT_REFERENCE * frame_rate_hz / REFERENCE_FRAME_RATE
                + 0.5
            )
        ),
    )


PEAK_MADS = 8.0
EXTENT_MADS = 3.0


def default_thresholds(index, baseline_frames):
    """(peak, extent) thresholds from robust pre-stimulus baseline statistics.

    peak = median + 8 MAD, extent = median + 3 MAD over the valid baseline
    samples. The peak multiplier must clear the expected maximum of pure
    baseline noise (about 5 MAD for a few hundred samples), which leaves
    real movement bursts one to two orders of magnitude of headroom.
    """
    base = np.asarray(index, dtype=np.float64)[list(baseline_frames)]
    base = base[np.isfinite(base)]
    if base.size == 0:
        return 0.0, 0.0
    med = float(np.median(base))
    mad = float(np.median(np.abs(base - med)))
    return med + PEAK_MADS * mad, med + EXTENT_MADS * mad


def _valid_runs(finite_mask):
    """Contiguous index runs of True entries as (start, end) inclusive pairs."""
    runs = []
    start = None
    for i, ok in enumerate(finite_mask):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(finite_mask) - 1))
    return runs


def classify_events(
    index,
    stimulus_frames=(),
    frame_rate_hz=REFERENCE_FRAME_RATE,
    thresholds=None,
    coiling_max_frames=None,
    egg_id=0,
):
    """Movement events of one egg's index series.

    ``stimulus_frames`` are additionally masked out (they are normally NaN
    already). ``thresholds``, when given, is the (peak, extent) pair;
    otherwise it comes from the pre-stimulus baseline. Events never span
    excluded frames; their intervals are disjoint by construction.
    """
    series = np.asarray(index, dtype=np.float64).copy()
    for k in stimulus_frames:
        if 0 <= k < len(series):
            series[k] = np.nan
    if coiling_max_frames is None:
        coiling_max_frames = coiling_frame_limit(frame_rate_hz)

    if thresholds is None:
        first_stim = min(stimulus_frames) if stimulus_frames else len(series)
        peak_thr, extent_thr = default_thresholds(series, range(0, first_stim))
    else:
        peak_thr, extent_thr = thresholds

    finite = np.isfinite(series)
    events = []
    for seg_start, seg_end in _valid_runs(finite):
        seg = series[seg_start : seg_end + 1]
        above = seg > extent_thr
        for run_start, run_end in _valid_runs(above):
            run = seg[run_start : run_end + 1]
            peak = float(run.max())
            if peak <= peak_thr:
                continue
            duration = run_end - run_start + 1
            kind = "coiling" if duration < coiling_max_frames else "swimming"
            events.append(
                PmrEvent(
                    egg_id=egg_id,
                    kind=kind,
                    start_frame=seg_start + run_start,
                    end_frame=seg_start + run_end,
                    peak_value=peak,
                )
            )
    return events


def event_probability_curves(events_by_egg, n_frames):
    """Per-frame fraction of eggs showing a coiling / swimming event.

    Because each egg's event intervals are disjoint, a frame is covered by at
    most one event per egg, so the two curves sum to at most 1.
    """
    n_eggs = len(events_by_egg)
    if n_eggs == 0:
        raise ValueError("need at least one egg")
    curves = {
        "coiling": np.zeros(n_frames),
        "swimming": np.zeros(n_frames),
    }
    for events in events_by_egg:
        for ev in events:
            lo = max(ev.start_frame, 0)
            hi = min(ev.end_frame, n_frames - 1)
            if hi >= lo:
                curves[ev.kind][lo : hi + 1] += 1.0
    for kind in curves:
        curves[kind] /= n_eggs
    return curves


def phase_durations(events, stimulus_frame, frame_rate_hz):
    """Reaction time and the two excitation phases of one egg.

    reaction: stimulus to the first post-stimulus event start.
    excitation1: first event end to the onset of swimming (0 when swimming
    starts immediately). excitation2: total post-stimulus swimming duration.
    """
    if frame_rate_hz <= 0:
        raise ValueError("frame_rate_hz must be > 0")
    post = sorted(
        (ev for ev in events if ev.start_frame > stimulus_frame),
        key=lambda ev: ev.start_frame,
    )
    if not post:
        return PmrPhases(None, None, None)
    first = post[0]
    reaction = (first.start_frame - stimulus_frame) / frame_rate_hz
    swims = [ev for ev in post if ev.kind == "swimming"]
    if swims:
        excitation1 = max(
            (swims[0].start_frame - first.end_frame) / frame_rate_hz, 0.0
        )
        excitation2 = sum(ev.duration for ev in swims) / frame_rate_hz
    else:
        excitation1 = None
        excitation2 = 0.0
    return PmrPhases(reaction, excitation1, excitation2)


def coiling_rate(events, window, n_eggs, frame_rate_hz):
    """Coiling events starting inside ``window`` per egg and second.

    ``window`` is an inclusive (first_frame, last_frame) pair.
    """
    lo, hi = window
    if hi < lo:
        raise ValueError("window must be non-empty")
    if n_eggs < 1:
        raise ValueError("n_eggs must be >= 1")
    count = sum(
        1 for ev in events if ev.kind == "coiling" and lo <= ev.start_frame <= hi
    )
    seconds = (hi - lo + 1) / frame_rate_hz
    return count / (n_eggs * seconds)


def event_frame_counts(events_by_egg):
    """Total number of events and of covered frames, per kind."""
    counts = {
        "coiling_events": 0,
        "swimming_events": 0,
        "coiling_frames": 0,
        "swimming_frames": 0,
    }
    for events in events_by_egg:
        for ev in events:
            counts[f"{ev.kind}_events"] += 1
            counts[f"{ev.kind}_frames"] += ev.duration
    return counts


def movement_index_matrix(index_by_egg):
    """Stack per-egg index series into an (eggs x frames) heatmap matrix."""
    if not index_by_egg:
        return np.zeros((0, 0))
    n = max(len(s) for s in index_by_egg)
    mat = np.full((len(index_by_egg), n), np.nan)
    for i, series in enumerate(index_by_egg):
        mat[i, : len(series)] = series
    return mat
