import numpy as np
import pytest

from platescreen.imagemodel import FactorAssignment, Project, WellRecord
from platescreen.report import (
    SECTION_IDS,
    class_histogram,
    plate_overlay,
    render_report,
)


def crop(v, size=20):
    return np.full((size, size), v, dtype=np.uint8)


class TestPlateOverlay:
    def test_dashed_count_matches_positives(self):
        wells = [f"w{i}" for i in range(12)]
        predictions = {w: "developed" for w in wells}
        for w in ("w1", "w5", "w9"):
            predictions[w] = "coagulated"
        overlay = plate_overlay(wells, predictions, {w: crop(128) for w in wells})
        assert overlay.outlined_count() == 3

    def test_empty_plate(self):
        overlay = plate_overlay([], {}, {})
        assert overlay.tiles == []

    def test_row_major_plate_order(self):
        wells = [f"P1-{r}{c:02d}" for r in "AB" for c in range(1, 13)]
        overlay = plate_overlay(wells, {}, {})
        assert overlay.tiles[0].well_id == "P1-A01"
        assert overlay.tiles[11].well_id == "P1-A12"
        assert overlay.tiles[12].well_id == "P1-B01"
        assert overlay.tiles[12].box[1] > overlay.tiles[11].box[1]

    def test_missing_crop_placeholder(self):
        overlay = plate_overlay(["a", "b"], {}, {"a": crop(100)})
        assert not overlay.tiles[0].missing
        assert overlay.tiles[1].missing


class TestClassHistogram:
    def test_fractions_sum_to_one(self):
        fractions = class_histogram(
            {0.5: ["coagulated"] * 3 + ["developed"] * 9, 1.0: ["coagulated"] * 12}
        )
        for dose, f in fractions.items():
            assert sum(f.values()) == pytest.approx(1.0)
        assert fractions[1.0] == {"coagulated": 1.0}

    def test_empty_dose_omitted(self):
        fractions = class_histogram({0.5: ["developed"], 1.0: []})
        assert list(fractions) == [0.5]

    def test_replicate_counts_fixture(self):
        # dose with 21 of 22 valid wells positive
        labels = ["coagulated"] * 21 + ["developed"]
        fractions = class_histogram({1.4: labels})
        assert fractions[1.4]["coagulated"] == pytest.approx(21 / 22)


def synthetic_project(n=12):
    project = Project(
        factor_schema={"plan": {"coagulation": ["yes", "no"]}, "disturbance": {}}
    )
    doses = [0.5, 1.0, 1.5, 2.0]
    rng = np.random.default_rng(3)
    for i in range(n):
        dose = doses[i % len(doses)]
        dead = i % 3 == 0
        project.add_well(
            WellRecord(
                well_id=f"w{i:02d}",
                factors=FactorAssignment(
                    plan_factors={"coagulation": "yes" if dead else "no"},
                    plan_params={"concentration": dose},
                ),
                features={"x3": rng.uniform(0, 100), "x7": rng.uniform(0, 50)},
                predictions={"coagulation": ("coagulated" if dead else "developed", 0.9)},
            )
        )
    project.classifiers["coagulation"] = {"version": 1, "features": ["x3", "x7"]}
    return project


class TestRenderReport:
    def test_empty_project_has_empty_state_sections(self, tmp_path):
        index = render_report(Project(), tmp_path / "r")
        html = index.read_text()
        for sid in SECTION_IDS:
            assert f'id="{sid}"' in html

    def test_full_project_contains_all_sections_and_assets(self, tmp_path):
        project = synthetic_project(16)
        crops = {w.well_id: crop(90) for w in project.wells}
        index = render_report(project, tmp_path / "r", crops=crops)
        html = index.read_text()
        for sid in SECTION_IDS:
            assert f'id="{sid}"' in html
        for asset in ("overlay.png", "histogram.png", "predictions.csv", "features.csv"):
            assert (tmp_path / "r" / asset).exists()

    def test_rerender_byte_identical(self, tmp_path):
        project = synthetic_project(8)
        crops = {w.well_id: crop(90) for w in project.wells}
        i1 = render_report(project, tmp_path / "a", crops=crops, timestamp="T0")
        i2 = render_report(project, tmp_path / "b", crops=crops, timestamp="T0")
        assert i1.read_bytes() == i2.read_bytes()
        assert (tmp_path / "a" / "overlay.png").read_bytes() == (
            tmp_path / "b" / "overlay.png"
        ).read_bytes()

    def test_timestamp_isolated_to_one_line(self, tmp_path):
        project = synthetic_project(4)
        i1 = render_report(project, tmp_path / "a", timestamp="T0")
        i2 = render_report(project, tmp_path / "b", timestamp="T1")
        d1 = [l for l in i1.read_text().splitlines() if 'id="timestamp"' not in l]
        d2 = [l for l in i2.read_text().splitlines() if 'id="timestamp"' not in l]
        assert d1 == d2
