import csv
import io
import re

import numpy as np
import pytest

from triage.core.classifiers import PredictionCacheClassifier, derived_id
from triage.core.reports import (
    build_matrix_report,
    caption,
    gallery_from_flags,
    render,
    slice_members,
    sweep_csv,
)
from triage.core.selection import detect
from triage.models.report import MatrixCell, RunMetadata, ShannonSlice, TriageReport
from triage.models.selection import SweepPoint, ThresholdConfig
from triage.models.transform import ALL_KINDS, TransformKind, TransformPolicy
from tests.conftest import TOY_IDS, TOY_SCRIPT, TOY_SHAPE

POLICY = TransformPolicy(seed=7)
SLICES = [ShannonSlice.parse(text) for text in ("<0.001", ">0.4", "all")]


def metadata() -> RunMetadata:
    return RunMetadata(
        seed=POLICY.seed, policy=POLICY, thresholds=ThresholdConfig(), slices=[s.label for s in SLICES],
        classifier="prediction-cache(scripted)",
    )


@pytest.fixture
def toy_report(toy_records, toy_labels, toy_classifier, toy_sample_map) -> TriageReport:
    return build_matrix_report(
        toy_records,
        toy_labels,
        SLICES,
        toy_classifier,
        POLICY,
        toy_sample_map,
        dataset="toy",
        metadata=metadata(),
        flags=detect(toy_records, toy_labels, 0.1),
    )


def test_slice_parsing():
    assert ShannonSlice.parse("<0.001").label == "s_x < 0.001"
    assert ShannonSlice.parse("s_x > 0.4") == ShannonSlice(op=">", value=0.4)
    assert ShannonSlice.parse("ALL").contains(123.0)
    with pytest.raises(ValueError):
        ShannonSlice.parse("=0.4")


def test_slice_members_need_correct_predictions(toy_records, toy_labels):
    members = slice_members(toy_records, toy_labels, ShannonSlice.parse("<0.1"))
    # Sample 3 is confident but wrong.
    assert members == ["toy/test/4"]


def test_matrix_cells_on_scripted_fixture(toy_report):
    assert len(toy_report.cells) == len(SLICES) * len(ALL_KINDS)
    for kind in ALL_KINDS:
        empty = toy_report.cell("s_x < 0.001", kind)
        assert (empty.attempts, empty.ratio) == (0, None)
        high = toy_report.cell("s_x > 0.4", kind)
        assert (high.attempts, high.errors, high.ratio) == (4, 2, 0.5)
        everything = toy_report.cell("all", kind)
        assert (everything.attempts, everything.errors) == (5, 2)
    assert toy_report.flags.count == 1
    assert toy_report.samples == 6


def flipping_classifier(flip: bool) -> PredictionCacheClassifier:
    table = {}
    for sample_id, (probs, label, _) in zip(TOY_IDS, TOY_SCRIPT):
        table[sample_id] = np.array(probs)
        other = (label + 1) % 4 if flip else label
        transformed = np.full(4, 0.1)
        transformed[other] = 0.7
        for kind in ALL_KINDS:
            table[derived_id(sample_id, kind.value)] = transformed
    return PredictionCacheClassifier(table, TOY_SHAPE)


@pytest.mark.parametrize("flip, ratio", [(True, 1.0), (False, 0.0)])
def test_all_or_nothing_flips(flip, ratio, toy_records, toy_labels, toy_sample_map):
    report = build_matrix_report(
        toy_records, toy_labels, SLICES[1:], flipping_classifier(flip), POLICY, toy_sample_map,
        dataset="toy", metadata=metadata(),
    )
    assert {cell.ratio for cell in report.cells} == {ratio}


def test_json_round_trip(toy_report):
    assert TriageReport.model_validate_json(render(toy_report, "json")) == toy_report
    assert '"report_version": 1' in render(toy_report, "json")


def test_markdown_layout(toy_report):
    text = render(toy_report, "markdown")
    assert "| Shannon slice | Panning | 2D rotation | Affine | Perspective |" in text
    assert "| s_x < 0.001 | — | — | — | — |" in text
    assert "| s_x > 0.4 | 0.50 (2/4) | 0.50 (2/4) | 0.50 (2/4) | 0.50 (2/4) |" in text


def test_rendered_ratios_match_counts(toy_report):
    text = render(toy_report, "markdown")
    for ratio, errors, attempts in re.findall(r"(\d\.\d\d) \((\d+)/(\d+)\)", text):
        assert float(ratio) == pytest.approx(int(errors) / int(attempts), abs=0.005)


def test_gallery_holds_flags_and_error_previews(toy_report, toy_sample_map):
    images = {sample_id: sample.image for sample_id, sample in toy_sample_map.items()}
    html = render(toy_report, "html-gallery", images)
    expected = toy_report.flags.count + len(toy_report.error_previews)
    assert html.count("<img ") == expected
    assert html.count("data:image/png;base64,") == expected
    assert caption(0, 2) in html


def test_error_previews_are_capped(toy_records, toy_labels, toy_classifier, toy_sample_map):
    report = build_matrix_report(
        toy_records, toy_labels, SLICES, toy_classifier, POLICY, toy_sample_map,
        dataset="toy", metadata=metadata(), error_previews=3,
    )
    assert len(report.error_previews) == 3


def test_flag_caption():
    from triage.models.selection import FlagEntry, FlagSet

    flags = FlagSet(tau_low=0.1, entries=(FlagEntry(sample_id="m/test/9", label=5, predicted=3, shannon=0.01),))
    report = gallery_from_flags("m", 10, flags, metadata())
    html = render(report, "html-gallery", {"m/test/9": np.zeros((2, 2, 1))})
    assert "Label: 5 / Prediction: 3" in html
    assert html.count("<img ") == 1


def test_flag_caption_uses_class_names():
    from triage.models.selection import FlagEntry, FlagSet

    names = ["zero", "one", "two", "three", "four", "five"]
    flags = FlagSet(tau_low=0.1, entries=(FlagEntry(sample_id="m/test/9", label=5, predicted=3, shannon=0.01),))
    report = gallery_from_flags("m", 10, flags, metadata(), names)
    assert report.class_names == names
    html = render(report, "html-gallery", {"m/test/9": np.zeros((2, 2, 1))})
    assert "Label: 5 (five) / Prediction: 3 (three)" in html
    assert caption(7, 0, names) == "Label: 7 / Prediction: 0 (zero)"


def test_empty_report_renders():
    report = TriageReport(dataset="empty", metadata=metadata())
    assert TriageReport.model_validate_json(render(report, "json")) == report
    markdown = render(report, "markdown")
    assert "| Shannon slice |" in markdown
    assert "<img " not in render(report, "html-gallery")


def test_cell_ratio_must_match_counts():
    with pytest.raises(ValueError):
        MatrixCell(slice="all", kind=TransformKind.PAN, attempts=4, errors=1, ratio=0.5)
    with pytest.raises(ValueError):
        MatrixCell(slice="all", kind=TransformKind.PAN, attempts=0, errors=0, ratio=0.0)


def test_sweep_csv():
    points = [
        SweepPoint(tau=0.0, candidates=5, errors=2, error_ratio=0.4),
        SweepPoint(tau=0.5, candidates=0, errors=0, error_ratio=None),
    ]
    rows = list(csv.reader(io.StringIO(sweep_csv(points))))
    assert rows == [["tau", "candidates", "errors", "error_ratio"], ["0.0", "5", "2", "0.4"], ["0.5", "0", "0", ""]]
