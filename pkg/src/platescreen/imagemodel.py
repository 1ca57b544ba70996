"""Core data model: image streams, factors, well records and the project store.

A project is a self-describing JSON document. Image data is referenced by
relative path (anchored at the project file's directory) and never embedded,
so plate trees can be moved wholesale and projects stay small enough to merge.
"""

import datetime
import json
import os
import re
import string
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DimensionError,
    FactorSchemaError,
    FrameGapError,
    MergeConflictError,
)

PROJECT_SCHEMA_VERSION = 1

DEFAULT_LAYOUT = "frame{frame:04d}.png"


@dataclass(frozen=True)
class ImageStream:
    """A per-well image tensor: frames x focus planes x height x width x channels.

    Intensities are 8-bit (0..255). The array is made read-only so streams can
    be shared freely between worker threads.
    """

    data: np.ndarray  # uint8, shape (n_frames, n_planes, h, w, n_channels)
    frame_rate_hz: float = 30.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 5:
            raise DimensionError(
                f"stream data must be 5-D (frames, planes, h, w, channels), got {arr.shape}"
            )
        if arr.dtype != np.uint8:
            raise ValueError("stream data must be uint8 (0..255)")
        if min(arr.shape) < 1:
            raise DimensionError(f"all stream dimensions must be >= 1, got {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_frames(self):
        return self.data.shape[0]

    @property
    def n_planes(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[2]

    @property
    def width(self):
        return self.data.shape[3]

    @property
    def n_channels(self):
        return self.data.shape[4]

    def frame(self, k, plane=0):
        """Return frame k of one focus plane: (h, w) if single channel else (h, w, c)."""
        img = self.data[k, plane]
        if img.shape[-1] == 1:
            return img[..., 0]
        return img

    @classmethod
    def from_frames(cls, frames, frame_rate_hz=30.0, meta=None):
        """Build a single-plane stream from a list of (h, w) or (h, w, c) arrays."""
        stacked = []
        shape = None
        for i, f in enumerate(frames):
            arr = np.asarray(f)
            if arr.ndim == 2:
                arr = arr[..., None]
            if arr.ndim != 3:
                raise DimensionError(f"frame {i} has unsupported shape {arr.shape}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise DimensionError(
                    f"frame {i} has shape {arr.shape}, expected {shape}"
                )
            stacked.append(arr)
        if not stacked:
            raise DimensionError("cannot build a stream from zero frames")
        data = np.stack(stacked)[:, None, ...].astype(np.uint8)
        return cls(data=data, frame_rate_hz=frame_rate_hz, meta=meta or {})


def _to_uint8(arr):
    """Convert 8- or 16-bit raster data to 8-bit by right shift."""
    if arr.dtype == np.uint8:
        return arr
    if arr.dtype == np.uint16:
        return (arr >> 8).astype(np.uint8)
    if np.issubdtype(arr.dtype, np.integer):
        return np.clip(arr, 0, 255).astype(np.uint8)
    raise ValueError(f"unsupported raster dtype {arr.dtype}")


_FIELD_RE = {
    "well": r"(?P<well>[^/\\]+?)",
    "frame": r"(?P<frame>\d+)",
    "plane": r"(?P<plane>\d+)",
    "channel": r"(?P<channel>\d+)",
}


def _layout_regex(layout):
    """Translate a {frame}/{plane}/{channel} filename template to a regex."""
    pattern = ""
    for literal, name, spec, _ in string.Formatter().parse(layout):
        pattern += re.escape(literal)
        if name is None:
            continue
        if name not in _FIELD_RE:
            raise ValueError(f"unknown layout placeholder {{{name}}}")
        if name != "well" and spec and (m := re.fullmatch(r"0(\d+)d", spec)):
            pattern += f"(?P<{name}>\\d{{{m.group(1)}}})"
        else:
            pattern += _FIELD_RE[name]
    return re.compile(pattern + r"$")


def load_stream(uri, layout=DEFAULT_LAYOUT, frame_rate_hz=30.0):
    """Load an ImageStream from a directory of raster frames.

    ``layout`` is a filename template with {frame}, {plane} and {channel}
    placeholders; missing placeholders default to a single plane/channel.
    Frames must form a contiguous index range; a gap raises FrameGapError.
    16-bit inputs are rescaled to 8-bit, RGB inputs keep their 3 channels.
    """
    root = Path(uri)
    if root.is_file():
        files = {(0, 0, 0): root}
    else:
        if not root.is_dir():
            raise FileNotFoundError(f"no such file or directory: {uri}")
        rx = _layout_regex(layout)
        files = {}
        for p in sorted(root.iterdir()):
            m = rx.match(p.name)
            if not m:
                continue
            gd = m.groupdict()
            key = (
                int(gd.get("frame", 0) or 0),
                int(gd.get("plane", 0) or 0),
                int(gd.get("channel", 0) or 0),
            )
            files[key] = p
        if not files:
            raise FileNotFoundError(f"no frames matching layout {layout!r} in {uri}")

    frame_ids = sorted({k[0] for k in files})
    plane_ids = sorted({k[1] for k in files})
    channel_ids = sorted({k[2] for k in files})
    lo = frame_ids[0]
    for want, have in zip(range(lo, lo + len(frame_ids)), frame_ids):
        if want != have:
            raise FrameGapError(want)
    for f in frame_ids:
        for z in plane_ids:
            for c in channel_ids:
                if (f, z, c) not in files:
                    raise FrameGapError(f, f"frame {f} missing plane {z} channel {c}")

    def read(path):
        with Image.open(path) as im:
            arr = np.asarray(im)
        arr = _to_uint8(arr)
        if arr.ndim == 2:
            arr = arr[..., None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3, 4):
            raise DimensionError(f"{path.name}: unsupported shape {arr.shape}")
        if arr.shape[2] == 4:  # drop alpha
            arr = arr[..., :3]
        return arr

    shape = None
    planes_per_frame = []
    for f in frame_ids:
        planes = []
        for z in plane_ids:
            chans = [read(files[(f, z, c)]) for c in channel_ids]
            img = chans[0] if len(chans) == 1 else np.concatenate(chans, axis=-1)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DimensionError(
                    f"frame {f} plane {z}: shape {img.shape} differs from {shape}"
                )
            planes.append(img)
        planes_per_frame.append(np.stack(planes))

    data = np.stack(planes_per_frame).astype(np.uint8)
    meta = {"source": str(uri), "layout": layout, "first_frame_index": lo}
    return ImageStream(data=data, frame_rate_hz=frame_rate_hz, meta=meta)


def save_stream(stream, out_dir, layout=DEFAULT_LAYOUT):
    """Write a stream back to PNG frames following ``layout``. Returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(stream.n_frames):
        for z in range(stream.n_planes):
            name = layout.format(frame=k, plane=z, channel=0, well="")
            img = stream.data[k, z]
            arr = img[..., 0] if img.shape[-1] == 1 else img
            p = out / name
            Image.fromarray(arr).save(p)
            paths.append(p)
    return paths


@dataclass
class FactorAssignment:
    """Class labels and scalar parameters of one experimental unit.

    ``plan_factors`` hold the variables under study, ``disturbance_factors``
    the nuisance variables (microscope, plate position, date). Scalar
    parameters (e.g. concentration) live in the ``*_params`` maps.
    """

    plan_factors: dict = field(default_factory=dict)
    disturbance_factors: dict = field(default_factory=dict)
    plan_params: dict = field(default_factory=dict)
    disturbance_params: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "plan_factors": dict(self.plan_factors),
            "disturbance_factors": dict(self.disturbance_factors),
            "plan_params": dict(self.plan_params),
            "disturbance_params": dict(self.disturbance_params),
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            plan_factors=dict(d.get("plan_factors", {})),
            disturbance_factors=dict(d.get("disturbance_factors", {})),
            plan_params=dict(d.get("plan_params", {})),
            disturbance_params=dict(d.get("disturbance_params", {})),
        )


UNKNOWN = "unknown"


@dataclass
class WellRecord:
    """One experimental unit: factors, image link, features, labels, predictions."""

    well_id: str
    image_ref: str | None = None
    factors: FactorAssignment = field(default_factory=FactorAssignment)
    features: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)  # endpoint -> class assigned by hand
    predictions: dict = field(default_factory=dict)  # endpoint -> (label, score)
    validity: list = field(default_factory=list)  # failed validity-check names

    def to_json(self):
        return {
            "well_id": self.well_id,
            "image_ref": self.image_ref,
            "factors": self.factors.to_json(),
            "features": dict(self.features),
            "labels": dict(self.labels),
            "predictions": {k: list(v) for k, v in self.predictions.items()},
            "validity": list(self.validity),
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            well_id=d["well_id"],
            image_ref=d.get("image_ref"),
            factors=FactorAssignment.from_json(d.get("factors", {})),
            features=dict(d.get("features", {})),
            labels=dict(d.get("labels", {})),
            predictions={k: tuple(v) for k, v in d.get("predictions", {}).items()},
            validity=list(d.get("validity", [])),
        )


def _default_provenance():
    from . import __version__

    return {"tool_version": __version__, "parameters": {}, "parents": []}


@dataclass
class Project:
    """Merge-able container of well records, trained classifiers and metadata.

    ``factor_schema`` declares the finite class set of every factor, e.g.
    ``{"plan": {"coagulation": ["yes", "no"]}, "disturbance": {"microscope": ["1", "2"]}}``.
    Assigned labels must come from the declared set or be "unknown".
    """

    wells: list = field(default_factory=list)
    classifiers: dict = field(default_factory=dict)  # endpoint -> serialized model
    factor_schema: dict = field(default_factory=lambda: {"plan": {}, "disturbance": {}})
    provenance: dict = field(default_factory=_default_provenance)
    path: Path | None = None  # set when loaded from / saved to disk

    def well(self, well_id):
        for w in self.wells:
            if w.well_id == well_id:
                return w
        raise KeyError(well_id)

    def well_ids(self):
        return [w.well_id for w in self.wells]

    def add_well(self, record):
        if record.well_id in set(self.well_ids()):
            raise MergeConflictError([record.well_id])
        self._check_factors(record)
        self.wells.append(record)

    def _check_factors(self, record):
        for group, assigned in (
            ("plan", record.factors.plan_factors),
            ("disturbance", record.factors.disturbance_factors),
        ):
            declared = self.factor_schema.get(group, {})
            for name, value in assigned.items():
                if name not in declared:
                    raise FactorSchemaError(f"undeclared {group} factor '{name}'")
                if value != UNKNOWN and value not in declared[name]:
                    raise FactorSchemaError(
                        f"label '{value}' not in declared classes of '{name}'"
                    )

    def to_json(self):
        return {
            "schema_version": PROJECT_SCHEMA_VERSION,
            "factor_schema": self.factor_schema,
            "wells": [w.to_json() for w in self.wells],
            "classifiers": self.classifiers,
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, d, path=None):
        version = d.get("schema_version")
        if version != PROJECT_SCHEMA_VERSION:
            raise FactorSchemaError(f"unsupported project schema_version {version}")
        return cls(
            wells=[WellRecord.from_json(w) for w in d.get("wells", [])],
            classifiers=dict(d.get("classifiers", {})),
            factor_schema=d.get("factor_schema", {"plan": {}, "disturbance": {}}),
            provenance=dict(d.get("provenance", {})),
            path=Path(path) if path else None,
        )

    def resolve_image(self, record):
        """Absolute path of a well's image link, anchored at the project file."""
        if record.image_ref is None:
            return None
        ref = Path(record.image_ref)
        if ref.is_absolute() or self.path is None:
            return ref
        return (self.path.parent / ref).resolve()


def save_project(project, path):
    """Atomically write the project JSON (write temp file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = json.dumps(project.to_json(), indent=1, sort_keys=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    project.path = path
    return path


def load_project(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        return Project.from_json(json.load(fh), path=path)


def merge_projects(a, b):
    """Union of two projects with disjoint well ids and identical factor schemas."""
    if a.factor_schema != b.factor_schema:
        raise FactorSchemaError("factor declarations differ between projects")
    ids_a = set(a.well_ids())
    ids_b = set(b.well_ids())
    clash = ids_a & ids_b
    if clash:
        raise MergeConflictError(clash)
    merged = Project(
        wells=list(a.wells) + list(b.wells),
        classifiers={**a.classifiers, **b.classifiers},
        factor_schema=json.loads(json.dumps(a.factor_schema)),
        provenance={
            "tool_version": a.provenance.get("tool_version"),
            "parameters": dict(a.provenance.get("parameters", {})),
            "parents": [
                {"wells": len(a.wells), "provenance": a.provenance},
                {"wells": len(b.wells), "provenance": b.provenance},
            ],
            "merged_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        },
    )
    return merged
