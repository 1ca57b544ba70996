"""Well-level orchestration: batch processing, training and classification.

Glues the segmentation, feature and classification modules to the project
store; the CLI and the HTTP service are thin layers over these functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import features as feat
from . import mlselect, pmr, preprocess, segment, synthgen
from .errors import DegenerateLabelsError
from .imagemodel import (
    FactorAssignment,
    Project,
    WellRecord,
    load_stream,
    save_project,
)

PLATE_ROWS = "ABCDEFGH"


def well_name(index, columns=12, plate=1):
    r, c = divmod(index, columns)
    return f"P{plate}-{PLATE_ROWS[r]}{c + 1:02d}"


@dataclass
class SingleEggAnalysis:
    features: dict
    validity: list
    crop: np.ndarray | None
    segmentation: segment.SingleEggResult


def analyze_single_egg_well(
    img,
    target_area_px,
    roundness_min=0.7,
    tol_pct=20.0,
    mean_gate=(20.0, 235.0),
):
    """Segment one egg and extract the instantaneous features of its crop."""
    img = np.asarray(img, dtype=np.float64)
    validity = []
    if not preprocess.validity_mean_gate(img, *mean_gate):
        validity.append("mean-intensity-gate")
    seg = segment.segment_single_egg(
        img, target_area_px, roundness_min=roundness_min, tol_pct=tol_pct
    )
    if not seg.valid:
        validity.append("single-egg-segmentation")
        return SingleEggAnalysis({}, validity, None, seg)
    y0, y1, x0, x1 = seg.bbox
    crop = img[y0:y1, x0:x1].copy()
    crop[~seg.mask[y0:y1, x0:x1]] = 0  # background encoded as zero
    fv = feat.instantaneous_features(crop)
    values = {k: v for k, v in fv.values.items() if fv.valid[k]}
    return SingleEggAnalysis(values, validity, crop, seg)


@dataclass
class PmrWellResult:
    hits: list
    tracked: list
    index_by_egg: list
    events_by_egg: list
    frames_valid: np.ndarray


def analyze_pmr_well(
    stream,
    r_min=20,
    r_max=30,
    accum_threshold=500,
    search_window=4,
    stimulus_windows=((249, 299), (649, 699)),
    drop_first=3,
    detection_frame=None,
    thresholds=None,
):
    """Detect, track and event-classify every egg of a movement sequence."""
    gray = preprocess.to_gray(stream)
    kept = preprocess.stimulus_exclusion_indices(
        gray.n_frames, stimulus_windows=stimulus_windows, drop_first=drop_first
    )
    frames_valid = np.zeros(gray.n_frames, dtype=bool)
    frames_valid[kept] = True
    bright_ok = preprocess.brightness_valid_frames(gray)
    frames_valid &= bright_ok

    if detection_frame is None:
        detection_frame = kept[0] if kept else 0
    hits = segment.detect_eggs_hough(
        gray.frame(detection_frame).astype(np.float64),
        r_min=r_min,
        r_max=r_max,
        accum_threshold=accum_threshold,
    )
    tracked = segment.track_eggs(gray, hits, search_window=search_window)
    index_by_egg = [
        feat.movement_index(t, gray, frames_valid=frames_valid) for t in tracked
    ]
    stim_frames = [k for k in range(gray.n_frames) if not frames_valid[k]]
    events_by_egg = [
        pmr.classify_events(
            idx,
            stimulus_frames=stim_frames,
            frame_rate_hz=gray.frame_rate_hz,
            thresholds=thresholds,
            egg_id=t.egg_id,
        )
        for idx, t in zip(index_by_egg, tracked)
    ]
    return PmrWellResult(hits, tracked, index_by_egg, events_by_egg, frames_valid)


def features_matrix(project, feature_names, endpoint=None, labeled_only=True):
    """(X, y, well_ids) over wells holding all requested features."""
    rows, labels, ids = [], [], []
    for w in project.wells:
        if any(name not in w.features for name in feature_names):
            continue
        if labeled_only and endpoint is not None and endpoint not in w.labels:
            continue
        rows.append([w.features[name] for name in feature_names])
        ids.append(w.well_id)
        if endpoint is not None:
            labels.append(w.labels.get(endpoint))
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(labels) if endpoint is not None else None
    return X, y, ids


def select_features(project, endpoint, candidates=None, k_best_pair=True):
    """ANOVA best single feature, then the best pair by the multivariate score."""
    names = candidates or sorted(
        {name for w in project.wells for name in w.features}
    )
    X, y, _ = features_matrix(project, names, endpoint=endpoint)
    if X.size == 0:
        raise DegenerateLabelsError(f"no labeled wells with features for {endpoint}")
    single = mlselect.anova_relevance(X, y, feature_names=names)
    anchor = single.best()[0][0]
    if not k_best_pair or len(names) < 2:
        return single, None, [anchor]
    pairs = mlselect.manova_pair_search(X, y, anchor, feature_names=names)
    best_pair = list(pairs.best()[0]) if pairs.rows else [anchor]
    return single, pairs, best_pair


def train_endpoint(project, endpoint, feature_names=None, k=5, seed=0):
    """Train and store a Bayes classifier for one endpoint.

    Returns (relevance_table, pair_table, cv_result, feature_names).
    """
    single = pairs = None
    if feature_names is None:
        single, pairs, feature_names = select_features(project, endpoint)
    X, y, _ = features_matrix(project, feature_names, endpoint=endpoint)
    if X.size == 0:
        raise DegenerateLabelsError(f"no labeled wells with features for {endpoint}")
    cv = mlselect.cross_validate(X, y, k=k, seed=seed)
    clf = mlselect.BayesClassifier().fit(X, y)
    previous = project.classifiers.get(endpoint, {})
    payload = clf.to_dict(feature_names)
    payload["version"] = int(previous.get("version", 0)) + 1
    payload["cv"] = cv.to_json()
    project.classifiers[endpoint] = payload
    return single, pairs, cv, feature_names


def classify_endpoint(project, endpoint):
    """Predict the endpoint for every well with the required features."""
    payload = project.classifiers.get(endpoint)
    if payload is None:
        raise KeyError(f"no trained classifier for endpoint {endpoint!r}")
    clf = mlselect.BayesClassifier.from_dict(payload)
    names = payload["features"]
    n = 0
    for w in project.wells:
        if any(name not in w.features for name in names):
            continue
        x = np.asarray([[w.features[name] for name in names]])
        scores = clf.decision_function(x)[0]
        label = str(clf.classes_[int(np.argmax(scores))])
        w.predictions[endpoint] = (label, float(scores.max()))
        n += 1
    return n


def make_synthetic_plate(
    out_dir,
    doses=(0.8, 0.9, 1.0, 1.2, 1.4),
    wells_per_dose=16,
    controls=16,
    radius=24,
    image_size=120,
    ec=1.05,
    hill=-6.0,
    seed=0,
    noise_sigma=3.0,
):
    """Write a synthetic single-egg plate: PNG per well plus project.json.

    The probability of a coagulated egg follows a sigmoid of the dose, so a
    full pipeline run can recover the planted dose-response curve. All wells
    carry ground-truth labels; training code picks its own subset.
    """
    from pathlib import Path

    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    project = Project(
        factor_schema={
            "plan": {"coagulation": ["yes", "no"]},
            "disturbance": {"microscope": ["1"]},
        }
    )
    plan = [(None, i) for i in range(controls)] + [
        (d, i) for d in doses for i in range(wells_per_dose)
    ]
    for idx, (dose, _) in enumerate(plan):
        if dose is None:
            p_dead = 0.02
        else:
            p_dead = 1.0 / (1.0 + (dose / ec) ** hill)
        dead = bool(rng.random() < p_dead)
        style = synthgen.STYLE_COAGULATED if dead else synthgen.STYLE_DEVELOPED
        img, _ = synthgen.render_single_well(
            style=style,
            radius=radius,
            size=image_size,
            seed=int(rng.integers(0, 2**31)),
            noise_sigma=noise_sigma,
        )
        wid = well_name(idx)
        fname = f"{wid}.png"
        Image.fromarray(img).save(img_dir / fname)
        record = WellRecord(
            well_id=wid,
            image_ref=f"images/{fname}",
            factors=FactorAssignment(
                plan_factors={"coagulation": "yes" if dead else "no"},
                disturbance_factors={"microscope": "1"},
                plan_params={} if dose is None else {"concentration": dose},
            ),
            labels={"coagulation": "yes" if dead else "no"},
        )
        project.add_well(record)
    path = save_project(project, out / "project.json")
    return project, path


def process_plate_images(project, target_area_px=None, radius=24):
    """Run single-egg segmentation + features over every linked well image."""
    if target_area_px is None:
        target_area_px = math.pi * radius * radius
    crops = {}
    for w in project.wells:
        path = project.resolve_image(w)
        if path is None:
            continue
        if path.is_dir():
            stream = load_stream(path)
            img = stream.frame(0)
            if img.ndim == 3:
                img = np.floor(img.mean(axis=-1) + 0.5)
        else:
            with Image.open(path) as im:
                img = np.asarray(im.convert("L"), dtype=np.float64)
        res = analyze_single_egg_well(img, target_area_px)
        w.features.update(res.features)
        for v in res.validity:
            if v not in w.validity:
                w.validity.append(v)
        if res.crop is not None:
            crops[w.well_id] = np.clip(res.crop, 0, 255).astype(np.uint8)
    return crops
