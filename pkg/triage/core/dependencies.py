import logging
from typing import Sequence

import numpy as np

from triage.core.classifiers import (
    BuiltinSoftmaxClassifier,
    ClassifierHandle,
    ExternalProcessClassifier,
    PredictionCacheClassifier,
    load_prediction_cache,
    predict_batch,
)
from triage.core.datasets import load_dataset, load_manifest
from triage.core.entropy import batch_records
from triage.core.errors import ConfigError, ShapeMismatchError, stage
from triage.core.model_format import load_builtin_model
from triage.core.parallel import chunked, map_ordered
from triage.core.repositories import ArtifactRepo
from triage.models.dataset import DatasetManifest, Sample
from triage.models.prediction import PredictionRecord
from triage.models.run import BackendDescriptor, BuiltinBackend, CacheBackend, RunConfig

logger = logging.getLogger(__name__)

SCORING_BATCH = 256


def get_manifest(config: RunConfig) -> DatasetManifest:
    with stage("dataset"):
        return load_manifest(config.dataset)


def get_samples(config: RunConfig, manifest: DatasetManifest) -> list[Sample]:
    with stage("dataset"):
        samples = load_dataset(manifest, config.splits)
        if not samples:
            raise ConfigError(f"dataset '{manifest.name}' splits {config.splits} hold no samples.")
    logger.info(f"Loaded {len(samples)} samples from '{manifest.name}' ({', '.join(config.splits)})")
    return samples


def open_classifier(
    descriptor: BackendDescriptor, class_count: int, input_shape: Sequence[int]
) -> ClassifierHandle:
    with stage("backend"):
        if isinstance(descriptor, CacheBackend):
            handle: ClassifierHandle = load_prediction_cache(descriptor.path, input_shape)
        elif isinstance(descriptor, BuiltinBackend):
            handle = BuiltinSoftmaxClassifier(load_builtin_model(descriptor.path), input_shape)
        else:
            handle = ExternalProcessClassifier(
                descriptor.command, class_count, input_shape, timeout=descriptor.timeout
            )
        if handle.class_count != class_count:
            handle.close()
            raise ShapeMismatchError(
                f"{handle.describe()} outputs {handle.class_count} classes, dataset has {class_count}."
            )
    logger.info(f"Opened classifier {handle.describe()}")
    return handle


def score_samples(
    classifier: ClassifierHandle, samples: Sequence[Sample], workers: int = 1
) -> list[PredictionRecord]:
    """Predict every sample once and attach entropies, in sample-id order."""
    ordered = sorted(samples, key=lambda sample: sample.id)

    def run(chunk: Sequence[Sample]) -> list[np.ndarray]:
        return predict_batch(
            classifier, [sample.image for sample in chunk], [sample.id for sample in chunk]
        )

    with stage("predict"):
        vectors = [
            vector
            for chunk in map_ordered(run, chunked(ordered, SCORING_BATCH), workers)
            for vector in chunk
        ]
        return batch_records([sample.id for sample in ordered], vectors)


def get_records(
    config: RunConfig,
    classifier: ClassifierHandle,
    samples: Sequence[Sample],
    repo: ArtifactRepo,
    reuse: bool = False,
) -> list[PredictionRecord]:
    """Prediction records for every sample, reusing the output directory's predictions.csv.

    Reuse happens only when the previous run in this directory used the same dataset,
    splits and backend, and its predictions cover every sample.
    """
    if reuse:
        with stage("predict"):
            table = repo.read_predictions()
        if table is not None and all(sample.id in table for sample in samples):
            logger.info(f"Reusing {repo.path('predictions.csv')}")
            cached = PredictionCacheClassifier(table, classifier.input_shape, source="predictions.csv")
            return score_samples(cached, samples)
    records = score_samples(classifier, samples, config.workers)
    repo.write_predictions(records)
    return records
