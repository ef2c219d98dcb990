# Artifact persistence: every file a run writes goes through ArtifactRepo so formats stay in one place.

import csv
import io
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ValidationError

from triage.core.classifiers import read_prediction_csv
from triage.core.errors import ConfigError
from triage.models.prediction import PredictionRecord
from triage.models.selection import ErrorEntry, FlagEntry

logger = logging.getLogger(__name__)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _float(value: float | None) -> str:
    # repr() is the shortest string that reads back to the same double.
    return "" if value is None else repr(float(value))


class ArtifactRepo:
    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def path(self, name: str) -> Path:
        return self.root / name

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        # newline="" keeps "\n" on every platform.
        with target.open("w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        logger.debug(f"Wrote {target}")
        return target

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, json.dumps(data, indent=2) + "\n")

    def write_model(self, name: str, model: BaseModel) -> Path:
        return self.write_text(name, model.model_dump_json(indent=2) + "\n")

    def write_jsonl(self, name: str, entries: Iterable[BaseModel]) -> Path:
        return self.write_text(name, "".join(entry.model_dump_json() + "\n" for entry in entries))

    def write_predictions(self, records: Sequence[PredictionRecord]) -> Path:
        """predictions.csv in the prediction-cache format, reloadable bit-exactly."""
        width = records[0].class_count if records else 0
        rows = (
            [record.sample_id, *(_float(p) for p in record.probs)]
            for record in sorted(records, key=lambda record: record.sample_id)
        )
        return self.write_text(
            "predictions.csv", _csv_text(["sample_id", *(f"p{i}" for i in range(width))], rows)
        )

    def read_predictions(self) -> dict[str, np.ndarray] | None:
        target = self.path("predictions.csv")
        if not target.exists():
            return None
        return read_prediction_csv(target)

    def write_records(self, records: Sequence[PredictionRecord], labels: Mapping[str, int]) -> Path:
        rows = (
            [record.sample_id, labels[record.sample_id], record.predicted_label, _float(record.shannon)]
            for record in sorted(records, key=lambda record: record.sample_id)
        )
        return self.write_text(
            "records.csv", _csv_text(["sample_id", "label", "predicted", "shannon"], rows)
        )

    def write_errors(self, entries: Sequence[ErrorEntry]) -> None:
        self.write_jsonl("errors.jsonl", entries)
        rows = (
            [
                entry.sample_id,
                entry.spec.kind,
                entry.original_label,
                entry.transformed_label,
                _float(entry.transformed_shannon),
            ]
            for entry in entries
        )
        self.write_text(
            "errors.csv",
            _csv_text(
                ["sample_id", "kind", "label", "transformed_label", "transformed_shannon"], rows
            ),
        )

    def write_flags(self, entries: Sequence[FlagEntry]) -> None:
        self.write_jsonl("flags.jsonl", entries)
        rows = (
            [entry.sample_id, entry.label, entry.predicted, _float(entry.shannon)]
            for entry in entries
        )
        self.write_text(
            "flags.csv", _csv_text(["sample_id", "label", "predicted", "shannon"], rows)
        )


def read_error_entries(path: Path | str) -> list[ErrorEntry]:
    """Load an errors.jsonl written by `generate`."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ConfigError(f"error set '{path}' does not exist.")
    entries = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entries.append(ErrorEntry.model_validate_json(line))
        except ValidationError as exc:
            raise ConfigError(f"{path}:{line_no}: not an error entry ({exc.error_count()} problems).")
    return entries
