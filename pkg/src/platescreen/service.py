"""Embedded HTTP API for labeling, segmentation preview and training.

A single process serves one project. GET routes read immutable snapshots;
the POST routes mutate the project under a writer lock and rewrite the
project file atomically.
"""

import io
import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from . import pipeline
from .report import draw_circle_overlay
from .errors import DegenerateLabelsError, StratificationError
from .imagemodel import load_stream, save_project


def _parse_filter(expr):
    """Conjunctive factor filter: 'microscope=1,position=A1' -> dict."""
    out = {}
    if not expr:
        return out
    for part in expr.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad filter term {part!r}, expected factor=value")
        name, value = part.split("=", 1)
        out[name.strip()] = value.strip()
    return out


def _well_summary(record):
    return {
        "well_id": record.well_id,
        "factors": record.factors.to_json(),
        "validity": list(record.validity),
        "labels": dict(record.labels),
        "predictions": {k: list(v) for k, v in record.predictions.items()},
        "has_image": record.image_ref is not None,
        "n_features": len(record.features),
    }


class LabelBody(BaseModel):
    endpoint: str
    label: str  # class name within the endpoint's declared set


class TrainBody(BaseModel):
    endpoint: str
    features: list[str] | None = None
    folds: int = 5
    seed: int = 0




def create_app(project, movement_matrix=None, autosave=True):
    """Build the FastAPI app serving one project.

    ``movement_matrix`` optionally provides the eggs-by-frames movement-index
    matrix backing the heatmap view.
    """
    app = FastAPI(title="platescreen", version="1")
    lock = threading.Lock()
    stream_cache = {}

    declared = {}
    for group in ("plan", "disturbance"):
        declared.update(project.factor_schema.get(group, {}))

    def persist():
        if autosave and project.path is not None:
            save_project(project, project.path)

    def get_record(well_id):
        try:
            return project.well(well_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown well {well_id!r}")

    def get_stream(record):
        if record.image_ref is None:
            raise HTTPException(status_code=404, detail="well has no image link")
        path = project.resolve_image(record)
        key = str(path)
        if key not in stream_cache:
            if len(stream_cache) > 8:
                stream_cache.clear()
            stream_cache[key] = load_stream(path)
        return stream_cache[key]

    @app.get("/api/wells")
    def list_wells(filter: str = Query(default="")):
        try:
            terms = _parse_filter(filter)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        for name in terms:
            if name not in declared:
                raise HTTPException(
                    status_code=400, detail=f"unknown factor {name!r}"
                )
        out = []
        for w in project.wells:
            assigned = {**w.factors.plan_factors, **w.factors.disturbance_factors}
            if all(assigned.get(k) == v for k, v in terms.items()):
                out.append(_well_summary(w))
        return {"wells": out}

    @app.get("/api/wells/{well_id}/frame/{k}")
    def well_frame(
        well_id: str,
        k: int,
        overlay: str = Query(default="none"),
        radius: str = Query(default="20:30"),
        accum_threshold: int = Query(default=500),
        gray_min: float = Query(default=50.0),
        gray_max: float = Query(default=200.0),
    ):
        record = get_record(well_id)
        stream = get_stream(record)
        if not 0 <= k < stream.n_frames:
            raise HTTPException(
                status_code=404, detail=f"frame {k} outside 0..{stream.n_frames - 1}"
            )
        img = stream.frame(k)
        if img.ndim == 3:
            img = np.floor(img.mean(axis=-1) + 0.5)
        img = np.asarray(img, dtype=np.float64)
        if overlay == "segmentation":
            from .segment import detect_eggs_hough

            try:
                r_min, r_max = (int(v) for v in radius.split(":"))
            except ValueError:
                raise HTTPException(status_code=400, detail=f"bad radius {radius!r}")
            hits = detect_eggs_hough(
                img,
                r_min=r_min,
                r_max=r_max,
                accum_threshold=accum_threshold,
                mean_gray_bounds=(gray_min, gray_max),
            )
            rgb = draw_circle_overlay(img, hits)
        elif overlay == "none":
            rgb = Image.fromarray(img.astype(np.uint8))
        else:
            raise HTTPException(status_code=400, detail=f"unknown overlay {overlay!r}")
        buf = io.BytesIO()
        rgb.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/wells/{well_id}/label")
    def label_well(well_id: str, body: LabelBody):
        record = get_record(well_id)
        classes = declared.get(body.endpoint)
        if classes is None:
            raise HTTPException(
                status_code=422, detail=f"unknown endpoint {body.endpoint!r}"
            )
        if body.label not in classes:
            raise HTTPException(
                status_code=422,
                detail=f"label {body.label!r} not in classes {classes} of {body.endpoint!r}",
            )
        with lock:
            record.labels[body.endpoint] = body.label
            persist()
        return _well_summary(record)

    @app.get("/api/label-queue")
    def label_queue(
        strategy: str = Query(default="random"),
        seed: int = Query(default=0),
        endpoint: str = Query(default=""),
    ):
        if strategy != "random":
            raise HTTPException(status_code=400, detail="only strategy=random exists")
        ids = sorted(w.well_id for w in project.wells)
        order = list(np.random.default_rng(seed).permutation(ids))
        for wid in order:
            record = project.well(wid)
            unlabeled = (
                endpoint not in record.labels if endpoint else not record.labels
            )
            if unlabeled:
                return {"well_id": wid, "remaining": sum(
                    1
                    for w in project.wells
                    if (endpoint not in w.labels if endpoint else not w.labels)
                )}
        return Response(status_code=204)

    @app.post("/api/train")
    def train(body: TrainBody):
        with lock:
            try:
                single, pairs, cv, names = pipeline.train_endpoint(
                    project,
                    body.endpoint,
                    feature_names=body.features,
                    k=body.folds,
                    seed=body.seed,
                )
            except (StratificationError, DegenerateLabelsError) as exc:
                counts = {}
                for w in project.wells:
                    lab = w.labels.get(body.endpoint)
                    if lab is not None:
                        counts[lab] = counts.get(lab, 0) + 1
                raise HTTPException(
                    status_code=409,
                    detail={"error": str(exc), "labeled_per_class": counts},
                )
            persist()
        return {
            "endpoint": body.endpoint,
            "features": names,
            "model_version": project.classifiers[body.endpoint]["version"],
            "relevance": single.to_json() if single else None,
            "pair_relevance": pairs.to_json() if pairs else None,
            "cv": cv.to_json(),
        }

    @app.put("/api/segmentation-params")
    def put_params(params: dict):
        with lock:
            project.provenance.setdefault("parameters", {})["segmentation"] = params
            persist()
        return {"saved": True, "segmentation": params}

    @app.get("/api/movement-index")
    def movement_index():
        if movement_matrix is None:
            raise HTTPException(status_code=404, detail="no movement data loaded")
        mat = np.asarray(movement_matrix, dtype=np.float64)
        safe = np.where(np.isfinite(mat), mat, None)
        return {
            "n_eggs": int(mat.shape[0]),
            "n_frames": int(mat.shape[1]) if mat.ndim > 1 else 0,
            "values": safe.tolist(),
        }

    return app


def serve(project, port=8080, static_dir=None, movement_matrix=None):
    """Run the API with uvicorn, optionally serving a static UI bundle."""
    import uvicorn

    app = create_app(project, movement_matrix=movement_matrix)
    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    uvicorn.run(app, host="127.0.0.1", port=port)
