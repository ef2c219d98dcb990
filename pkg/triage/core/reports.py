"""Error-ratio matrices, sweep series and the static image gallery."""

import base64
import csv
import io
import logging
from typing import Literal, Mapping, Sequence

import numpy as np
from markupsafe import escape

from triage.core.classifiers import ClassifierHandle
from triage.core.datasets import image_to_png_bytes
from triage.core.selection import join_labels, run_tests
from triage.core.transforms import apply_transform
from triage.models.dataset import Sample
from triage.models.prediction import PredictionRecord
from triage.models.report import (
    FlagSummary,
    MatrixCell,
    RunMetadata,
    ShannonSlice,
    TriageReport,
)
from triage.models.selection import ErrorEntry, FlagSet, SweepPoint
from triage.models.transform import TransformKind, TransformPolicy

logger = logging.getLogger(__name__)

RenderFormat = Literal["json", "markdown", "html-gallery"]
ABSENT = "—"


def slice_members(
    records: Sequence[PredictionRecord], labels: Mapping[str, int], shannon_slice: ShannonSlice
) -> list[str]:
    """Correctly predicted samples whose entropy falls in the slice, sorted by id."""
    return [
        record.sample_id
        for record, label in join_labels(records, labels)
        if record.predicted_label == label and shannon_slice.contains(record.shannon)
    ]


def build_matrix_report(
    records: Sequence[PredictionRecord],
    labels: Mapping[str, int],
    slices: Sequence[ShannonSlice],
    classifier: ClassifierHandle,
    policy: TransformPolicy,
    samples: Mapping[str, Sample],
    *,
    dataset: str,
    metadata: RunMetadata,
    flags: FlagSet | None = None,
    class_names: Sequence[str] | None = None,
    error_previews: int = 25,
    workers: int = 1,
) -> TriageReport:
    """One cell per (slice, kind): every slice member gets one transform of that kind."""
    cells: list[MatrixCell] = []
    previews: dict[tuple[str, str], ErrorEntry] = {}
    for shannon_slice in slices:
        members = slice_members(records, labels, shannon_slice)
        for kind in policy.kinds:
            if not members:
                cells.append(
                    MatrixCell(slice=shannon_slice.label, kind=kind, attempts=0, errors=0, ratio=None)
                )
                continue
            errors = run_tests(members, policy, classifier, samples, kind=kind, workers=workers)
            cells.append(
                MatrixCell(
                    slice=shannon_slice.label,
                    kind=kind,
                    attempts=errors.attempts,
                    errors=len(errors),
                    ratio=errors.error_ratio,
                )
            )
            for entry in errors.entries:
                if len(previews) >= error_previews:
                    break
                previews.setdefault((entry.sample_id, entry.spec.kind), entry)
            logger.info(
                f"Cell [{shannon_slice.label}, {kind.value}]: {len(errors)}/{errors.attempts} errors"
            )
    flag_entries = list(flags.entries) if flags is not None else []
    return TriageReport(
        dataset=dataset,
        samples=len(records),
        cells=cells,
        flags=FlagSummary(count=len(flag_entries), previews=flag_entries),
        error_previews=list(previews.values()),
        class_names=list(class_names) if class_names else None,
        metadata=metadata,
    )


def _format_ratio(cell: MatrixCell | None) -> str:
    if cell is None or cell.ratio is None:
        return ABSENT
    return f"{cell.ratio:.2f} ({cell.errors}/{cell.attempts})"


def _row(cells: Sequence[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def render_markdown(report: TriageReport) -> str:
    kinds = [kind for kind in TransformKind if any(cell.kind == kind for cell in report.cells)]
    slices = list(dict.fromkeys(cell.slice for cell in report.cells))
    lines = [
        f"# Error ratio (#error/#test): {report.dataset}",
        "",
        f"Samples: {report.samples}. Seed: {report.metadata.seed}. Classifier: {report.metadata.classifier}.",
        "",
        _row(["Shannon slice", *(kind.title for kind in kinds)]),
        _row(["---", *("---:" for _ in kinds)]),
    ]
    for slice_label in slices:
        row = [_format_ratio(report.cell(slice_label, kind)) for kind in kinds]
        lines.append(_row([slice_label, *row]))
    lines += ["", f"Flagged as low-quality data: {report.flags.count}."]
    return "\n".join(lines) + "\n"


def _class_text(label: int, class_names: Sequence[str] | None) -> str:
    if class_names and 0 <= label < len(class_names):
        return f"{label} ({class_names[label]})"
    return str(label)


def caption(label: int, predicted: int, class_names: Sequence[str] | None = None) -> str:
    return f"Label: {_class_text(label, class_names)} / Prediction: {_class_text(predicted, class_names)}"


def _figure(image: np.ndarray | None, title: str, text: str) -> str:
    if image is None:
        body = '<div class="missing">image unavailable</div>'
    else:
        encoded = base64.b64encode(image_to_png_bytes(image)).decode("ascii")
        body = f'<img src="data:image/png;base64,{encoded}" alt="{escape(title)}">'
    return f'<figure>{body}<figcaption title="{escape(title)}">{escape(text)}</figcaption></figure>'


def render_gallery(report: TriageReport, images: Mapping[str, np.ndarray]) -> str:
    """Single-file HTML: flagged samples as stored, error previews as transformed."""
    flag_figures = []
    for entry in report.flags.previews:
        image = images.get(entry.sample_id)
        if image is None:
            logger.warning(f"No image for flagged sample '{entry.sample_id}'")
        text = caption(entry.label, entry.predicted, report.class_names)
        flag_figures.append(_figure(image, entry.sample_id, text))
    error_figures = []
    for entry in report.error_previews:
        source = images.get(entry.sample_id)
        image = apply_transform(source, entry.spec) if source is not None else None
        title = f"{entry.sample_id} ({TransformKind(entry.spec.kind).title})"
        text = caption(entry.original_label, entry.transformed_label, report.class_names)
        error_figures.append(_figure(image, title, text))
    return "\n".join(
        [
            "<!DOCTYPE html>",
            '<html lang="en">',
            "<head>",
            '<meta charset="utf-8">',
            f"<title>{escape(report.dataset)} triage gallery</title>",
            "<style>",
            "body { font-family: sans-serif; }",
            "figure { display: inline-block; margin: 8px; text-align: center; }",
            "img { width: 112px; image-rendering: pixelated; }",
            "</style>",
            "</head>",
            "<body>",
            f"<h1>{escape(report.dataset)}</h1>",
            f"<h2>Suspected low-quality data ({len(flag_figures)})</h2>",
            '<section class="flags">',
            *flag_figures,
            "</section>",
            f"<h2>Generated errors ({len(error_figures)})</h2>",
            '<section class="errors">',
            *error_figures,
            "</section>",
            "</body>",
            "</html>",
        ]
    ) + "\n"


def render(
    report: TriageReport,
    fmt: RenderFormat,
    images: Mapping[str, np.ndarray] | None = None,
) -> str:
    if fmt == "json":
        return report.model_dump_json(indent=2) + "\n"
    if fmt == "markdown":
        return render_markdown(report)
    if fmt == "html-gallery":
        return render_gallery(report, images or {})
    raise ValueError(f"unknown report format '{fmt}'.")


def gallery_from_flags(
    dataset: str,
    samples: int,
    flags: FlagSet,
    metadata: RunMetadata,
    class_names: Sequence[str] | None = None,
) -> TriageReport:
    """A report carrying only flags, for the detect command's gallery."""
    return TriageReport(
        dataset=dataset,
        samples=samples,
        flags=FlagSummary(count=len(flags), previews=list(flags.entries)),
        class_names=list(class_names) if class_names else None,
        metadata=metadata,
    )


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["tau", "candidates", "errors", "error_ratio"])
    for point in points:
        ratio = "" if point.error_ratio is None else repr(point.error_ratio)
        writer.writerow([repr(point.tau), point.candidates, point.errors, ratio])
    return buffer.getvalue()
