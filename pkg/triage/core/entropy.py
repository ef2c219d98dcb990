"""Shannon indices over classifier probability vectors.

Entropies are in nats. A zero probability contributes nothing (0 * ln 0 = 0).
Vectors that pass validation are renormalized before use, so the entropy is
always computed on an exact distribution.
"""

import logging
import math
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import entr

from triage.core.config import get_settings
from triage.core.errors import InvalidDistributionError
from triage.models.prediction import PredictionRecord

logger = logging.getLogger(__name__)


def validate_distribution(probs: ArrayLike, tolerance: float | None = None) -> np.ndarray:
    """Check the prediction-vector invariants and return the renormalized float64 vector."""
    tolerance = get_settings().norm_tolerance if tolerance is None else tolerance
    vector = np.asarray(probs, dtype=np.float64)
    if vector.ndim != 1:
        raise InvalidDistributionError(
            f"prediction vector must be one-dimensional, got shape {vector.shape}.",
            invariant="shape",
        )
    if vector.size < 2:
        raise InvalidDistributionError(
            f"prediction vector needs at least 2 classes, got {vector.size}.",
            invariant="class_count",
        )
    not_finite = np.flatnonzero(~np.isfinite(vector))
    if not_finite.size:
        index = int(not_finite[0])
        raise InvalidDistributionError(
            f"entry {index} is not finite ({vector[index]}).", invariant="finite", index=index
        )
    negative = np.flatnonzero(vector < 0)
    if negative.size:
        index = int(negative[0])
        raise InvalidDistributionError(
            f"entry {index} is negative ({vector[index]}).", invariant="range", index=index
        )
    above = np.flatnonzero(vector > 1 + tolerance)
    if above.size:
        index = int(above[0])
        raise InvalidDistributionError(
            f"entry {index} exceeds 1 ({vector[index]}).", invariant="range", index=index
        )
    # fsum is exactly rounded, hence independent of entry order.
    total = math.fsum(vector)
    if abs(total - 1.0) > tolerance:
        raise InvalidDistributionError(
            f"entries sum to {total!r}, outside 1 +/- {tolerance:g}.", invariant="sum"
        )
    return vector / total


def _entropy(vector: np.ndarray) -> float:
    # Clamped to [0, ln N]; the bound can be overshot by an ulp for uniform vectors.
    return min(max(math.fsum(entr(vector)), 0.0), math.log(vector.size))


def shannon_index(probs: ArrayLike) -> float:
    return _entropy(validate_distribution(probs))


def argmax_label(probs: ArrayLike) -> int:
    # np.argmax returns the first maximum: ties go to the lowest index.
    return int(np.argmax(validate_distribution(probs)))


def max_entropy(class_count: int) -> float:
    return math.log(class_count)


def shannon_indices(matrix: ArrayLike) -> np.ndarray:
    """Row-wise `shannon_index` for an (n, N) matrix."""
    rows = np.asarray(matrix, dtype=np.float64)
    if rows.ndim != 2:
        raise InvalidDistributionError(
            f"expected an (n, N) matrix, got shape {rows.shape}.", invariant="shape"
        )
    return np.array([shannon_index(row) for row in rows], dtype=np.float64)


def batch_records(
    ids: Sequence[str], prob_vectors: Sequence[ArrayLike]
) -> list[PredictionRecord]:
    if len(ids) != len(prob_vectors):
        raise InvalidDistributionError(
            f"{len(ids)} ids but {len(prob_vectors)} prediction vectors.", invariant="shape"
        )
    records: list[PredictionRecord] = []
    class_count: int | None = None
    for index, (sample_id, probs) in enumerate(zip(ids, prob_vectors)):
        raw = np.asarray(probs, dtype=np.float64)
        if class_count is None:
            class_count = raw.size
        elif raw.size != class_count:
            raise InvalidDistributionError(
                f"inconsistent class count: vector {index} ('{sample_id}') has {raw.size} "
                f"entries, expected {class_count}.",
                invariant="class_count",
                index=index,
            )
        try:
            vector = validate_distribution(raw)
        except InvalidDistributionError as exc:
            raise InvalidDistributionError(
                f"sample '{sample_id}': {exc.message}", invariant=exc.invariant, index=exc.index
            ) from exc
        records.append(
            PredictionRecord(
                sample_id=sample_id,
                probs=tuple(float(p) for p in raw),
                predicted_label=int(np.argmax(vector)),
                shannon=_entropy(vector),
            )
        )
    return records


def entropy_summary(
    records: Iterable[PredictionRecord], tau_low: float, tau_high: float
) -> dict[str, float | int | None]:
    values = [record.shannon for record in records]
    if not values:
        return {"count": 0, "min": None, "max": None, "mean": None, "below_tau_low": 0, "above_tau_high": 0}
    return {
        "count": len(values),
        "min": min(values),
        "max": max(values),
        "mean": math.fsum(values) / len(values),
        "below_tau_low": sum(1 for value in values if value < tau_low),
        "above_tau_high": sum(1 for value in values if value > tau_high),
    }
