"""Entropy-guided test generation and low-quality data detection.

Candidates for generation are correctly predicted samples with entropy strictly above
tau_high. A transformed candidate is an error when its prediction differs from the label;
on candidates the label equals the original prediction, so this is the same as the
prediction changing. Flags are mispredicted samples with entropy strictly below tau_low.
"""

import logging
from typing import Mapping, Sequence

from triage.core.classifiers import ClassifierHandle, derived_id, predict_batch
from triage.core.entropy import argmax_label, shannon_index
from triage.core.errors import BackendError, SelectionError
from triage.core.parallel import chunked, map_ordered
from triage.core.transforms import apply_transform, choice, stable_draw_index
from triage.models.dataset import Sample
from triage.models.prediction import PredictionRecord
from triage.models.selection import (
    CandidateSet,
    ErrorEntry,
    ErrorSet,
    FlagEntry,
    FlagSet,
    Minimisation,
    SweepPoint,
)
from triage.models.transform import TransformKind, TransformPolicy, TransformSpec

logger = logging.getLogger(__name__)

BATCH_SIZE = 64


def join_labels(
    records: Sequence[PredictionRecord], labels: Mapping[str, int]
) -> list[tuple[PredictionRecord, int]]:
    """Pair every record with its label, in ascending sample-id order."""
    record_ids = {record.sample_id for record in records}
    if len(record_ids) != len(records):
        raise SelectionError("duplicate sample ids among prediction records.")
    missing_labels = sorted(record_ids - labels.keys())
    if missing_labels:
        raise SelectionError(f"unmatched sample_id '{missing_labels[0]}': prediction without a label.")
    missing_records = sorted(labels.keys() - record_ids)
    if missing_records:
        raise SelectionError(f"unmatched sample_id '{missing_records[0]}': label without a prediction.")
    return sorted(
        ((record, labels[record.sample_id]) for record in records),
        key=lambda pair: pair[0].sample_id,
    )


def _check_tau(name: str, tau: float) -> None:
    if not tau >= 0:
        raise SelectionError(f"{name} must be >= 0, got {tau}.")


def build_candidates(
    records: Sequence[PredictionRecord], labels: Mapping[str, int], tau_high: float
) -> CandidateSet:
    _check_tau("tau_high", tau_high)
    ids = tuple(
        record.sample_id
        for record, label in join_labels(records, labels)
        if record.shannon > tau_high and record.predicted_label == label
    )
    return CandidateSet(tau_high=tau_high, sample_ids=ids)


def detect(
    records: Sequence[PredictionRecord], labels: Mapping[str, int], tau_low: float
) -> FlagSet:
    _check_tau("tau_low", tau_low)
    entries = tuple(
        FlagEntry(
            sample_id=record.sample_id,
            label=label,
            predicted=record.predicted_label,
            shannon=record.shannon,
        )
        for record, label in join_labels(records, labels)
        if record.shannon < tau_low and record.predicted_label != label
    )
    logger.info(f"Flagged {len(entries)} of {len(records)} samples below tau_low={tau_low:g}")
    return FlagSet(tau_low=tau_low, entries=entries)


def _evaluate(
    sample_ids: Sequence[str],
    policy: TransformPolicy,
    classifier: ClassifierHandle,
    samples: Mapping[str, Sample],
    workers: int,
) -> list[ErrorEntry | None]:
    """Transform and re-predict each sample once; None where the label survives."""
    missing = [sample_id for sample_id in sample_ids if sample_id not in samples]
    if missing:
        raise SelectionError(f"unmatched sample_id '{missing[0]}': no image for candidate.")

    def run(chunk: Sequence[str]) -> list[ErrorEntry | None]:
        specs: list[TransformSpec] = []
        images = []
        for sample_id in chunk:
            sample = samples[sample_id]
            spec = choice(policy, stable_draw_index(sample_id), sample.shape)
            specs.append(spec)
            images.append(apply_transform(sample.image, spec))
        keys = [derived_id(sample_id, spec.kind) for sample_id, spec in zip(chunk, specs)]
        try:
            vectors = predict_batch(classifier, images, keys)
        except BackendError as exc:
            if exc.index is not None:
                exc.sample_id = chunk[exc.index]
            raise
        outcomes: list[ErrorEntry | None] = []
        for sample_id, spec, vector in zip(chunk, specs, vectors):
            label = samples[sample_id].label
            predicted = argmax_label(vector)
            if predicted == label:
                outcomes.append(None)
                continue
            outcomes.append(
                ErrorEntry(
                    sample_id=sample_id,
                    spec=spec,
                    transformed_label=predicted,
                    original_label=label,
                    transformed_shannon=shannon_index(vector),
                )
            )
        return outcomes

    results = map_ordered(run, chunked(list(sample_ids), BATCH_SIZE), workers)
    return [outcome for chunk in results for outcome in chunk]


def run_tests(
    sample_ids: Sequence[str],
    policy: TransformPolicy,
    classifier: ClassifierHandle,
    samples: Mapping[str, Sample],
    *,
    kind: TransformKind | None = None,
    workers: int = 1,
) -> ErrorSet:
    """Apply one drawn transformation to each sample and keep those whose label flips.

    `kind` forces every draw to one transformation kind.
    """
    if kind is not None:
        policy = policy.only(kind)
    ids = sorted(set(sample_ids))
    outcomes = _evaluate(ids, policy, classifier, samples, workers)
    return ErrorSet(
        attempts=len(ids), entries=tuple(entry for entry in outcomes if entry is not None)
    )


def generate(
    candidates: CandidateSet,
    policy: TransformPolicy,
    classifier: ClassifierHandle,
    samples: Mapping[str, Sample],
    *,
    kind: TransformKind | None = None,
    workers: int = 1,
) -> ErrorSet:
    result = run_tests(
        candidates.sample_ids, policy, classifier, samples, kind=kind, workers=workers
    )
    logger.info(
        f"Generated {result.attempts} tests above tau_high={candidates.tau_high:g}: "
        f"{len(result)} errors"
    )
    return result


def threshold_sweep(
    records: Sequence[PredictionRecord],
    labels: Mapping[str, int],
    taus: Sequence[float],
    policy: TransformPolicy,
    classifier: ClassifierHandle,
    samples: Mapping[str, Sample],
    *,
    workers: int = 1,
) -> list[SweepPoint]:
    """Error ratio of `generate` at each tau_high.

    Draws depend only on (seed, sample id), so every sample keeps its transformation
    across thresholds and each tau only has to look up outcomes computed for the lowest one.
    """
    if not taus:
        raise SelectionError("threshold sweep needs at least one tau.")
    for tau in taus:
        _check_tau("sweep tau", tau)
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise SelectionError(f"sweep taus must be strictly increasing, got {list(taus)}.")
    widest = build_candidates(records, labels, taus[0])
    ids = sorted(widest.sample_ids)
    outcomes = dict(zip(ids, _evaluate(ids, policy, classifier, samples, workers)))
    points = []
    for tau in taus:
        members = build_candidates(records, labels, tau).sample_ids
        errors = sum(1 for sample_id in members if outcomes[sample_id] is not None)
        points.append(
            SweepPoint(
                tau=tau,
                candidates=len(members),
                errors=errors,
                error_ratio=errors / len(members) if members else None,
            )
        )
    return points


def replay(
    entries: Sequence[ErrorEntry],
    classifier: ClassifierHandle,
    samples: Mapping[str, Sample],
) -> list[ErrorEntry]:
    """Re-apply each stored spec and re-query; returns the entries that did not reproduce."""
    missing = [entry.sample_id for entry in entries if entry.sample_id not in samples]
    if missing:
        raise SelectionError(f"unmatched sample_id '{missing[0]}': not in the dataset.")
    images = [apply_transform(samples[entry.sample_id].image, entry.spec) for entry in entries]
    keys = [derived_id(entry.sample_id, entry.spec.kind) for entry in entries]
    vectors = predict_batch(classifier, images, keys)
    stale = [
        entry
        for entry, vector in zip(entries, vectors)
        if argmax_label(vector) != entry.transformed_label
    ]
    logger.info(f"Replayed {len(entries)} errors, {len(entries) - len(stale)} reproduced")
    return stale


def minimisation(samples: int, candidates: CandidateSet) -> Minimisation:
    return Minimisation(
        samples=samples,
        candidates=len(candidates),
        avoided_fraction=1.0 - len(candidates) / samples if samples else None,
    )
