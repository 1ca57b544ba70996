"""Presentation layer: plate overlays, class histograms and the HTML report.

The report is a single directory (index.html + PNG assets + CSV appendices)
and is deterministic for a given project: the only clock-derived content is
one metadata line that callers can pin by passing ``timestamp``.
"""

import csv
import html
import io
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image, ImageDraw

from .assay import fit_dose_response, sigmoid_response

SECTION_IDS = (
    "metadata",
    "overlay",
    "results-table",
    "histogram",
    "regression",
    "scatter",
)

POSITIVE_LABELS = {"coagulated", "no-movement", "no-heartbeat", "yes"}


@dataclass
class OverlayTile:
    well_id: str
    box: tuple  # (x0, y0, x1, y1) in montage pixels
    outlined: bool
    missing: bool


@dataclass
class PlateOverlay:
    image: Image.Image
    tiles: list

    def outlined_count(self):
        return sum(1 for t in self.tiles if t.outlined)


def draw_circle_overlay(img, hits):
    """RGB copy of a gray frame with detected circles outlined."""
    rgb = Image.fromarray(np.asarray(img, dtype=np.uint8)).convert("RGB")
    draw = ImageDraw.Draw(rgb)
    for h in hits:
        draw.ellipse(
            (h.cx - h.r, h.cy - h.r, h.cx + h.r, h.cy + h.r),
            outline=(255, 60, 60),
            width=2,
        )
    return rgb


def _dashed_rectangle(draw, box, color=(255, 40, 40), dash=6, width_px=2):
    x0, y0, x1, y1 = box
    def dash_line(a, b, horizontal):
        length = (b[0] - a[0]) if horizontal else (b[1] - a[1])
        pos = 0
        while pos < length:
            end = min(pos + dash, length)
            if horizontal:
                draw.line([(a[0] + pos, a[1]), (a[0] + end, a[1])], fill=color, width=width_px)
            else:
                draw.line([(a[0], a[1] + pos), (a[0], a[1] + end)], fill=color, width=width_px)
            pos += 2 * dash
    dash_line((x0, y0), (x1, y0), True)
    dash_line((x0, y1), (x1, y1), True)
    dash_line((x0, y0), (x0, y1), False)
    dash_line((x1, y0), (x1, y1), False)


def plate_overlay(wells, predictions, crops, tile_size=96, columns=12):
    """Tile well crops in plate order, dashing positive-endpoint wells.

    ``wells`` is the ordered list of well ids, ``predictions`` maps id ->
    label, ``crops`` maps id -> 2-D uint8 array (missing ids get a dark
    placeholder tile).
    """
    n = len(wells)
    cols = min(columns, max(n, 1))
    rows = (n + cols - 1) // cols if n else 0
    montage = Image.new(
        "RGB", (cols * tile_size, max(rows, 1) * tile_size), (24, 24, 24)
    )
    draw = ImageDraw.Draw(montage)
    tiles = []
    for i, wid in enumerate(wells):
        r, c = divmod(i, cols)
        x0, y0 = c * tile_size, r * tile_size
        box = (x0, y0, x0 + tile_size - 1, y0 + tile_size - 1)
        crop = crops.get(wid)
        missing = crop is None
        if not missing:
            img = Image.fromarray(np.asarray(crop, dtype=np.uint8)).convert("RGB")
            img = img.resize((tile_size, tile_size), Image.NEAREST)
            montage.paste(img, (x0, y0))
        else:
            draw.rectangle(box, fill=(60, 60, 60))
        outlined = str(predictions.get(wid, "")) in POSITIVE_LABELS
        if outlined:
            inset = (box[0] + 2, box[1] + 2, box[2] - 2, box[3] - 2)
            _dashed_rectangle(draw, inset)
        tiles.append(OverlayTile(well_id=wid, box=box, outlined=outlined, missing=missing))
    return PlateOverlay(image=montage, tiles=tiles)


def class_histogram(predictions_by_dose):
    """Per-dose class fractions; fractions at each dose sum to 1.

    ``predictions_by_dose`` maps dose -> list of class labels. Doses without
    predictions are omitted.
    """
    out = {}
    for dose, labels in sorted(predictions_by_dose.items()):
        labels = [str(l) for l in labels]
        if not labels:
            continue
        total = len(labels)
        fracs = {}
        for lab in sorted(set(labels)):
            fracs[lab] = labels.count(lab) / total
        out[dose] = fracs
    return out


def _fig_to_png_bytes(fig):
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def histogram_figure(fractions_by_dose, positive_label):
    doses = list(fractions_by_dose)
    pos = [fractions_by_dose[d].get(positive_label, 0.0) * 100 for d in doses]
    neg = [100.0 - p for p in pos]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    x = np.arange(len(doses))
    ax.bar(x - 0.2, pos, width=0.4, color="#c23b22", label=positive_label)
    ax.bar(x + 0.2, neg, width=0.4, color="#4878a8", label="developed")
    ax.set_xticks(x, [str(d) for d in doses])
    ax.set_xlabel("dose")
    ax.set_ylabel("% of wells")
    ax.set_ylim(0, 105)
    ax.legend(frameon=False)
    fig.tight_layout()
    return _fig_to_png_bytes(fig)


def regression_figure(conc, effect, fit):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.semilogx(conc, np.asarray(effect) * 100, "ko", label="measured")
    if fit is not None and fit.converged:
        zz = np.geomspace(min(conc) * 0.6, max(conc) * 1.6, 200)
        ax.semilogx(
            zz,
            sigmoid_response(zz, fit.p_min, fit.p_max, fit.ec_x, fit.d) * 100,
            "-",
            color="#c23b22",
            label="fit",
        )
        ax.axvline(fit.ec_x, color="#888888", linestyle="--")
    ax.set_xlabel("concentration")
    ax.set_ylabel("effect [%]")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _fig_to_png_bytes(fig)


def scatter_figure(X, labels, feature_names):
    fig, ax = plt.subplots(figsize=(5, 4))
    X = np.asarray(X)
    labels = np.asarray([str(l) for l in labels])
    for lab, color in zip(sorted(set(labels)), ("#c23b22", "#4878a8", "#60a060", "#a060a0")):
        rows = labels == lab
        ax.plot(X[rows, 0], X[rows, 1], "o", ms=4, color=color, label=lab)
    ax.set_xlabel(feature_names[0])
    ax.set_ylabel(feature_names[1] if X.shape[1] > 1 else "")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _fig_to_png_bytes(fig)


def heatmap_figure(matrix):
    """Blue-to-red heatmap of a movement-index matrix (rows = larvae)."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    data = np.ma.masked_invalid(np.asarray(matrix, dtype=np.float64))
    im = ax.imshow(data, aspect="auto", cmap="coolwarm", interpolation="nearest")
    fig.colorbar(im, ax=ax, label="movement index")
    ax.set_xlabel("frame")
    ax.set_ylabel("larva")
    fig.tight_layout()
    return _fig_to_png_bytes(fig)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _section(sid, title, body):
    return f'<section id="{sid}"><h2>{html.escape(title)}</h2>\n{body}\n</section>'


def render_report(project, out_dir, crops=None, movement=None, timestamp="unset"):
    """Write the HTML report bundle for a processed project.

    ``crops`` maps well id -> 2-D uint8 image for the overlay section;
    ``movement`` is an optional eggs x frames movement-index matrix.
    Returns the path of index.html.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wells = project.wells
    endpoint = next(iter(project.classifiers), None)
    sections = []

    meta_rows = "".join(
        f"<tr><td>{html.escape(k)}</td><td>{html.escape(str(v))}</td></tr>"
        for k, v in (
            ("wells", len(wells)),
            ("classifiers", ", ".join(project.classifiers) or "none"),
            ("tool version", project.provenance.get("tool_version", "?")),
        )
    )
    meta_rows += (
        f'<tr><td>generated</td><td id="timestamp">{html.escape(str(timestamp))}</td></tr>'
    )
    sections.append(_section("metadata", "Run metadata", f"<table>{meta_rows}</table>"))

    predictions = {
        w.well_id: w.predictions.get(endpoint, ("", 0.0))[0] if endpoint else ""
        for w in wells
    }
    overlay = plate_overlay([w.well_id for w in wells], predictions, crops or {})
    overlay.image.save(out / "overlay.png")
    body = '<img src="overlay.png" alt="plate overlay"/>'
    if not wells:
        body = "<p>No wells in project.</p>" + body
    sections.append(_section("overlay", "Plate overlay", body))

    pred_rows = [
        (
            w.well_id,
            w.factors.plan_params.get("concentration", ""),
            predictions.get(w.well_id, ""),
            ";".join(w.validity),
        )
        for w in wells
    ]
    _write_csv(out / "predictions.csv", ["well_id", "concentration", "prediction", "validity"], pred_rows)
    table = "".join(
        f"<tr><td>{html.escape(str(a))}</td><td>{html.escape(str(b))}</td>"
        f"<td>{html.escape(str(c))}</td><td>{html.escape(str(d))}</td></tr>"
        for a, b, c, d in pred_rows
    ) or "<tr><td colspan=4>empty</td></tr>"
    sections.append(
        _section(
            "results-table",
            "Classification results",
            f"<table><tr><th>well</th><th>dose</th><th>prediction</th><th>validity</th></tr>{table}</table>"
            '<p>Appendix: <a href="predictions.csv">predictions.csv</a>, '
            '<a href="features.csv">features.csv</a></p>',
        )
    )

    feature_names = sorted({k for w in wells for k in w.features})
    _write_csv(
        out / "features.csv",
        ["well_id"] + feature_names,
        [[w.well_id] + [w.features.get(k, "") for k in feature_names] for w in wells],
    )

    by_dose = {}
    for w in wells:
        dose = w.factors.plan_params.get("concentration")
        if dose is None or w.well_id not in predictions or not predictions[w.well_id]:
            continue
        by_dose.setdefault(dose, []).append(predictions[w.well_id])
    fractions = class_histogram(by_dose)
    if fractions:
        positive = sorted(POSITIVE_LABELS & {l for ls in by_dose.values() for l in ls})
        pos_label = positive[0] if positive else sorted(fractions[next(iter(fractions))])[0]
        (out / "histogram.png").write_bytes(histogram_figure(fractions, pos_label))
        hist_body = '<img src="histogram.png" alt="class histogram"/>'
    else:
        hist_body = "<p>No dose-resolved predictions.</p>"
    sections.append(_section("histogram", "Class fractions per dose", hist_body))

    reg_body = "<p>No dose-response data.</p>"
    if fractions:
        doses = sorted(d for d in fractions if isinstance(d, (int, float)))
        pos_label = sorted(POSITIVE_LABELS & set().union(*[set(f) for f in fractions.values()])) or [None]
        if len(doses) >= 4 and pos_label[0]:
            eff = [fractions[d].get(pos_label[0], 0.0) for d in doses]
            fit = fit_dose_response(doses, eff)
            (out / "regression.png").write_bytes(regression_figure(doses, eff, fit))
            verdict = f"EC50 = {fit.ec_x:.4g}" if fit.converged else "fit did not converge"
            reg_body = f'<img src="regression.png" alt="dose response"/><p>{verdict}</p>'
    sections.append(_section("regression", "Dose-response regression", reg_body))

    scatter_body = "<p>Not enough features for a scatterplot.</p>"
    plotted = [w for w in wells if len(w.features) >= 2 and predictions.get(w.well_id)]
    if len(plotted) >= 3 and len(feature_names) >= 2:
        f0, f1 = feature_names[:2]
        pts = np.array(
            [[w.features.get(f0, np.nan), w.features.get(f1, np.nan)] for w in plotted]
        )
        labs = [predictions[w.well_id] for w in plotted]
        (out / "scatter.png").write_bytes(scatter_figure(pts, labs, (f0, f1)))
        scatter_body = '<img src="scatter.png" alt="feature scatter"/>'
    if movement is not None and np.asarray(movement).size:
        (out / "heatmap.png").write_bytes(heatmap_figure(movement))
        scatter_body += '<h3>Movement heatmap</h3><img src="heatmap.png" alt="movement heatmap"/>'
    sections.append(_section("scatter", "Feature space", scatter_body))

    page = (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        "<title>Plate screening report</title>"
        "<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
        "td,th{border:1px solid #ccc;padding:2px 8px}img{max-width:100%}</style>"
        "</head><body><h1>Plate screening report</h1>\n"
        + "\n".join(sections)
        + "\n</body></html>\n"
    )
    index = out / "index.html"
    index.write_text(page, encoding="utf-8")
    return index
