"""Command-line interface for batch processing and the labeling service."""

import csv
import json
import math
import os
from pathlib import Path

import click
import numpy as np
from PIL import Image

from . import pipeline, pmr as pmr_mod, preprocess, report
from .assay import estimate_acquisition_time, fit_dose_response, validation_metrics
from .imagemodel import load_project, load_stream, save_project
from .mlselect import WrapperNormalizer
from .synthgen import SynthScript, EventSpec, render_sequence, write_ground_truth


@click.group()
def main():
    """Well-plate screening toolkit."""


def _radius_pair(value):
    try:
        r_min, r_max = (int(v) for v in value.split(":"))
    except ValueError:
        raise click.BadParameter(f"expected MIN:MAX, got {value!r}")
    return r_min, r_max


@main.command()
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--mode", type=click.Choice(["sequence", "plate"]), default="sequence")
@click.option("--eggs", default=8, help="eggs per well (sequence mode)")
@click.option("--frames", default=100)
@click.option("--size", default=250, help="image width and height")
@click.option("--radius", default="20:30", help="egg radius range MIN:MAX")
@click.option("--drift", default=1, help="max drift in px per frame")
@click.option("--noise", default=5.0, help="Gaussian pixel noise sigma")
@click.option("--seed", default=0)
@click.option("--event", "events", multiple=True,
              help="scripted event EGG:START:DURATION:KIND[:AMPLITUDE]")
def synth(out, mode, eggs, frames, size, radius, drift, noise, seed, events):
    """Render synthetic wells with ground truth."""
    out_dir = Path(out)
    if mode == "plate":
        project, path = pipeline.make_synthetic_plate(out_dir, seed=seed)
        click.echo(f"wrote {len(project.wells)}-well plate project to {path}")
        return
    r_min, r_max = _radius_pair(radius)
    evs = []
    for spec in events:
        parts = spec.split(":")
        if len(parts) not in (4, 5):
            raise click.BadParameter(f"bad event spec {spec!r}")
        evs.append(
            EventSpec(
                egg=int(parts[0]),
                start_frame=int(parts[1]),
                duration_frames=int(parts[2]),
                kind=parts[3],
                amplitude=float(parts[4]) if len(parts) == 5 else 1.0,
            )
        )
    script = SynthScript(
        n_eggs=eggs,
        n_frames=frames,
        width=size,
        height=size,
        radius_range=(r_min, r_max),
        drift_px_per_frame=drift,
        noise_sigma=noise,
        seed=seed,
        events=evs,
    )
    stream, truth = render_sequence(script)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k in range(stream.n_frames):
        Image.fromarray(stream.frame(k)).save(out_dir / f"frame{k:04d}.png")
    write_ground_truth(truth, out_dir / "ground_truth.json")
    click.echo(f"wrote {stream.n_frames} frames + ground_truth.json to {out_dir}")


@main.command(name="preprocess")
@click.argument("image", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), required=True)
@click.option("--norm", type=click.Choice(["none", "affine-meanstd", "affine-minmax", "saturate"]),
              default="none")
@click.option("--sat-low", default=2.0)
@click.option("--sat-high", default=98.0)
@click.option("--smooth-sigma", default=0.0)
def preprocess_cmd(image, out, norm, sat_low, sat_high, smooth_sigma):
    """Normalize and smooth a single image."""
    with Image.open(image) as im:
        img = np.asarray(im.convert("L"), dtype=np.float64)
    if norm == "affine-meanstd":
        img01 = preprocess.normalize_affine(img, img.mean(), img.std(ddof=1))
        img01 = (img01 - img01.min()) / max(img01.max() - img01.min(), 1e-12)
    elif norm == "affine-minmax":
        img01 = preprocess.normalize_minmax(img)
    elif norm == "saturate":
        img01 = preprocess.normalize_saturating(img, sat_low, sat_high)
    else:
        img01 = img / 255.0
    if smooth_sigma > 0:
        img01 = preprocess.gaussian_smooth(img01, smooth_sigma)
    Image.fromarray(preprocess.requantize_8bit(img01)).save(out)
    click.echo(f"wrote {out}")


@main.command(name="segment")
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--mode", type=click.Choice(["single", "multi"]), default="single")
@click.option("--radius", default="20:30", help="egg radius range MIN:MAX")
@click.option("--accum-threshold", default=500)
@click.option("--search-window", default=4)
@click.option("--debug-overlays", is_flag=True, default=False)
def segment_cmd(project_path, mode, radius, accum_threshold, search_window, debug_overlays):
    """Segment every linked well image and extract features."""
    project = load_project(project_path)
    r_min, r_max = _radius_pair(radius)
    if mode == "single":
        r_mid = (r_min + r_max) / 2
        crops = pipeline.process_plate_images(
            project, target_area_px=math.pi * r_mid * r_mid
        )
        if debug_overlays:
            dbg = Path(project_path).parent / "overlays"
            dbg.mkdir(exist_ok=True)
            for wid, crop in crops.items():
                Image.fromarray(crop).save(dbg / f"{wid}.png")
        click.echo(f"segmented {len(crops)} of {len(project.wells)} wells")
    else:
        from .segment import detect_eggs_hough

        n_hits = 0
        dbg = Path(project_path).parent / "overlays"
        for w in project.wells:
            path = project.resolve_image(w)
            if path is None or not path.is_dir():
                continue
            stream = preprocess.to_gray(load_stream(path))
            frame = stream.frame(0).astype(np.float64)
            hits = detect_eggs_hough(
                frame, r_min=r_min, r_max=r_max, accum_threshold=accum_threshold
            )
            w.features["egg_count"] = float(len(hits))
            n_hits += len(hits)
            if debug_overlays:
                dbg.mkdir(exist_ok=True)
                report.draw_circle_overlay(frame, hits).save(dbg / f"{w.well_id}.png")
        click.echo(f"detected {n_hits} eggs")
    save_project(project, project_path)


@main.command(name="select-features")
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--endpoint", required=True)
def select_features_cmd(project_path, endpoint):
    """Rank features by class separability for an endpoint."""
    project = load_project(project_path)
    single, pairs, best = pipeline.select_features(project, endpoint)
    click.echo("single-feature relevance:")
    for names, score in single.rows:
        click.echo(f"  {names[0]:>12s}  {score:.3f}")
    if pairs:
        click.echo("best pair: " + " + ".join(best))


@main.command()
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--endpoint", required=True)
@click.option("--features", default=None, help="comma-separated feature names")
@click.option("--folds", default=5)
@click.option("--seed", default=0)
def train(project_path, endpoint, features, folds, seed):
    """Train and store a Bayes classifier for one endpoint."""
    project = load_project(project_path)
    names = features.split(",") if features else None
    single, pairs, cv, used = pipeline.train_endpoint(
        project, endpoint, feature_names=names, k=folds, seed=seed
    )
    save_project(project, project_path)
    click.echo(
        f"trained {endpoint} on {used}: cv error "
        f"{100 * cv.error_mean:.2f} +- {100 * cv.error_std:.2f} %"
    )


@main.command()
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--endpoint", required=True)
def classify(project_path, endpoint):
    """Apply a stored classifier to all wells with features."""
    project = load_project(project_path)
    n = pipeline.classify_endpoint(project, endpoint)
    save_project(project, project_path)
    click.echo(f"classified {n} wells for {endpoint}")


@main.command(name="normalize-wrapper")
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--endpoint", required=True, help="plan factor to preserve")
@click.option("--disturbance", required=True, help="disturbance factor to suppress")
@click.option("--alpha", default=0.8)
@click.option("--features", default=None, help="comma-separated feature names")
def normalize_wrapper_cmd(project_path, endpoint, disturbance, alpha, features):
    """Learn per-disturbance-class feature corrections."""
    project = load_project(project_path)
    names = features.split(",") if features else sorted(
        {n for w in project.wells for n in w.features}
    )
    rows, y, z = [], [], []
    for w in project.wells:
        if any(n not in w.features for n in names):
            continue
        lab = w.labels.get(endpoint) or w.factors.plan_factors.get(endpoint)
        dist = w.factors.disturbance_factors.get(disturbance)
        if lab in (None, "unknown") or dist in (None, "unknown"):
            continue
        rows.append([w.features[n] for n in names])
        y.append(lab)
        z.append(dist)
    norm = WrapperNormalizer(alpha=alpha).fit(
        np.asarray(rows), np.asarray(y), np.asarray(z)
    )
    res = norm.result_
    Xc = norm.transform(np.asarray(rows), np.asarray(z))
    i = 0
    for w in project.wells:
        if any(n not in w.features for n in names):
            continue
        lab = w.labels.get(endpoint) or w.factors.plan_factors.get(endpoint)
        dist = w.factors.disturbance_factors.get(disturbance)
        if lab in (None, "unknown") or dist in (None, "unknown"):
            continue
        for j, n in enumerate(names):
            w.features[n] = float(Xc[i, j])
        i += 1
    project.provenance.setdefault("parameters", {})["wrapper_normalization"] = {
        "alpha": alpha,
        "corrections": res.corrections,
        "xi_plan": res.xi_plan,
        "xi_disturbance": res.xi_disturbance,
    }
    save_project(project, project_path)
    click.echo(
        f"plan accuracy {res.xi_plan_before:.3f} -> {res.xi_plan:.3f}; "
        f"disturbance accuracy {res.xi_disturbance_before:.3f} -> {res.xi_disturbance:.3f} "
        f"(target {res.target_disturbance:.3f})"
    )


@main.command()
@click.argument("projects", nargs=-1, type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def merge(projects, out):
    """Fuse projects with disjoint wells into one."""
    from .imagemodel import merge_projects

    merged = load_project(projects[0])
    for path in projects[1:]:
        merged = merge_projects(merged, load_project(path))
    save_project(merged, out)
    click.echo(f"merged {len(projects)} projects -> {out} ({len(merged.wells)} wells)")


@main.group()
def assay():
    """Assay-quality statistics and dose-response fits."""


@assay.command()
@click.option("--csv", "csv_path", type=click.Path(exists=True), required=True,
              help="CSV with columns concentration,effect")
def ec50(csv_path):
    """Fit the four-parameter dose-response curve."""
    conc, eff = [], []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            conc.append(float(row["concentration"]))
            eff.append(float(row["effect"]))
    fit = fit_dose_response(conc, eff)
    click.echo(json.dumps(fit.to_json(), indent=1))


@assay.command()
@click.option("--csv", "csv_path", type=click.Path(exists=True), required=True,
              help="CSV with columns group,value")
@click.option("--sigma-log-potency", default=None, type=float)
@click.option("--out", type=click.Path(), default=None, help="also write JSON here")
def metrics(csv_path, sigma_log_potency, out):
    """Quality statistics (CV, SNR, SHV, SF, Z', MSR) of sample groups."""
    groups = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            groups.setdefault(row["group"], []).append(float(row["value"]))
    m = validation_metrics(groups, sigma_log_potency=sigma_log_potency)
    payload = json.dumps(m.to_json(), indent=1)
    if out:
        Path(out).write_text(payload, encoding="utf-8")
    click.echo(payload)


@assay.command(name="acquisition-time")
@click.option("--wells", default=96)
@click.option("--images-per-well", default=1)
@click.option("--passes", default=1)
@click.option("--t-image", default=0.2)
@click.option("--t-move", default=1.2)
@click.option("--t-return", default=4.0)
def acquisition_time_cmd(wells, images_per_well, passes, t_image, t_move, t_return):
    """Estimate plate acquisition time in seconds."""
    t = estimate_acquisition_time(wells, images_per_well, passes, t_image, t_move, t_return)
    click.echo(f"{t:.1f} s ({t / 60:.1f} min)")


@main.command(name="pmr")
@click.option("--sequence", type=click.Path(exists=True), required=True,
              help="directory of PNG frames")
@click.option("--out", type=click.Path(), required=True)
@click.option("--radius", default="20:30")
@click.option("--accum-threshold", default=500)
@click.option("--search-window", default=4)
@click.option("--fps", default=30.03)
def pmr_cmd(sequence, out, radius, accum_threshold, search_window, fps):
    """Run the movement-event pipeline on one sequence."""
    r_min, r_max = _radius_pair(radius)
    stream = load_stream(sequence, frame_rate_hz=fps)
    res = pipeline.analyze_pmr_well(
        stream,
        r_min=r_min,
        r_max=r_max,
        accum_threshold=accum_threshold,
        search_window=search_window,
    )
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "events.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["egg_id", "kind", "start_frame", "end_frame", "peak_value"])
        for events in res.events_by_egg:
            for ev in events:
                w.writerow([ev.egg_id, ev.kind, ev.start_frame, ev.end_frame, ev.peak_value])
    curves = pmr_mod.event_probability_curves(res.events_by_egg, stream.n_frames) \
        if res.events_by_egg else {"coiling": np.zeros(stream.n_frames), "swimming": np.zeros(stream.n_frames)}
    with open(out_dir / "probability_curves.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "p_coiling", "p_swimming"])
        for k in range(stream.n_frames):
            w.writerow([k, curves["coiling"][k], curves["swimming"][k]])
    mat = pmr_mod.movement_index_matrix(res.index_by_egg)
    np.savetxt(out_dir / "movement_index.csv", mat, delimiter=",")
    from .features import series_to_long_csv

    series_to_long_csv(
        {f"egg{t.egg_id}": idx for t, idx in zip(res.tracked, res.index_by_egg)},
        out_dir / "movement_index_long.csv",
    )
    click.echo(
        f"{len(res.tracked)} eggs, "
        f"{sum(len(e) for e in res.events_by_egg)} events -> {out_dir}"
    )


@main.command(name="report")
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def report_cmd(project_path, out):
    """Render the HTML report bundle."""
    project = load_project(project_path)
    if not project.wells:
        raise click.ClickException("project has no wells; nothing to report")
    crops = {}
    for w in project.wells:
        path = project.resolve_image(w)
        if path is not None and path.is_file():
            with Image.open(path) as im:
                crops[w.well_id] = np.asarray(im.convert("L"))
    import datetime

    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    index = report.render_report(project, out, crops=crops, timestamp=stamp)
    click.echo(f"report at {index}")


@main.command()
@click.option("--project", "project_path", type=click.Path(exists=True), required=True)
@click.option("--port", default=None, type=int)
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None)
def serve(project_path, port, static_dir):
    """Serve the labeling / preview API (and optionally the UI bundle)."""
    from .service import serve as run

    project = load_project(project_path)
    if port is None:
        port = int(os.environ.get("PLATESCREEN_PORT", "8080"))
    run(project, port=port, static_dir=static_dir)


if __name__ == "__main__":
    main()
