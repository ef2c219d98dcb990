import csv
import json
from pathlib import Path

import numpy as np
import pytest

from triage.core.classifiers import PredictionCacheClassifier, derived_id
from triage.core.config import get_settings
from triage.core.datasets import write_idx_pair
from triage.core.entropy import batch_records
from triage.models.dataset import Sample
from triage.models.transform import ALL_KINDS

TOY_SHAPE = (4, 4, 1)

# Six scripted samples over four classes: (probs, label, probs after any transform).
#   0: H ~ 1.39, correct, flips to 0     -> candidate, error
#   1: H ~ 0.43, correct, stays 2        -> candidate
#   2: H ~ 1.09, correct, flips to 3     -> candidate, error
#   3: H ~ 0.067, label 0, predicted 2   -> flagged
#   4: H ~ 0.067, correct, stays 2       -> candidate only for tau_high < 0.067
#   5: H ~ 1.33, correct, stays 0        -> candidate
TOY_SCRIPT = [
    ([0.25, 0.2, 0.3, 0.25], 2, [0.7, 0.1, 0.1, 0.1]),
    ([0.033, 0.033, 0.9, 0.034], 2, [0.1, 0.1, 0.7, 0.1]),
    ([0.1, 0.6, 0.2, 0.1], 1, [0.1, 0.2, 0.1, 0.6]),
    ([0.0033, 0.0033, 0.99, 0.0034], 0, [0.0033, 0.0033, 0.99, 0.0034]),
    ([0.0033, 0.0033, 0.99, 0.0034], 2, [0.05, 0.05, 0.85, 0.05]),
    ([0.4, 0.2, 0.2, 0.2], 0, [0.5, 0.2, 0.2, 0.1]),
]
TOY_IDS = [f"toy/test/{index}" for index in range(len(TOY_SCRIPT))]


@pytest.fixture(autouse=True)
def fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def toy_samples() -> list[Sample]:
    rng = np.random.default_rng(3)
    return [
        Sample(
            id=sample_id,
            # Multiples of 1/255 so IDX files reproduce the pixels exactly.
            image=rng.integers(0, 256, TOY_SHAPE).astype(np.float64) / 255.0,
            label=label,
        )
        for sample_id, (_, label, _) in zip(TOY_IDS, TOY_SCRIPT)
    ]


@pytest.fixture
def toy_sample_map(toy_samples) -> dict[str, Sample]:
    return {sample.id: sample for sample in toy_samples}


@pytest.fixture
def toy_labels() -> dict[str, int]:
    return {sample_id: label for sample_id, (_, label, _) in zip(TOY_IDS, TOY_SCRIPT)}


@pytest.fixture
def toy_records():
    return batch_records(TOY_IDS, [probs for probs, _, _ in TOY_SCRIPT])


def scripted_table(script=TOY_SCRIPT, ids=TOY_IDS) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    for sample_id, (probs, _, transformed) in zip(ids, script):
        table[sample_id] = np.array(probs)
        for kind in ALL_KINDS:
            table[derived_id(sample_id, kind.value)] = np.array(transformed)
    return table


@pytest.fixture
def toy_classifier() -> PredictionCacheClassifier:
    return PredictionCacheClassifier(scripted_table(), TOY_SHAPE, source="scripted")


def write_cache_csv(path: Path, table: dict[str, np.ndarray]) -> Path:
    width = len(next(iter(table.values())))
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["sample_id", *(f"p{i}" for i in range(width))])
        for sample_id, vector in table.items():
            writer.writerow([sample_id, *(repr(float(p)) for p in vector)])
    return path


@pytest.fixture
def toy_dataset(tmp_path, toy_samples) -> dict[str, Path]:
    """IDX files, manifest, scripted prediction cache and a run config on disk."""
    data = tmp_path / "data"
    data.mkdir()
    write_idx_pair(toy_samples, data / "test-images.idx", data / "test-labels.idx")
    manifest = data / "manifest.json"
    manifest.write_text(
        json.dumps(
            {
                "name": "toy",
                "class_count": 4,
                "splits": {
                    "test": {
                        "format": "idx",
                        "images": "test-images.idx",
                        "labels": "test-labels.idx",
                    }
                },
            }
        ),
        encoding="utf-8",
    )
    cache = write_cache_csv(data / "scripted.csv", scripted_table())
    config = data / "run.json"
    config.write_text(
        json.dumps(
            {
                "dataset": "manifest.json",
                "backend": {"kind": "prediction-cache", "path": "scripted.csv"},
                "policy": {"seed": 7},
                "slices": ["<0.001", ">0.4", "all"],
            }
        ),
        encoding="utf-8",
    )
    return {"dir": data, "manifest": manifest, "cache": cache, "config": config}
