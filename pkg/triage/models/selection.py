from pydantic import BaseModel, ConfigDict, Field, model_validator

from triage.models.common import ClassIndex, Count, Nats, SampleId
from triage.models.transform import TransformSpec


class ThresholdConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau_low: Nats = Field(default=0.1, description="Below this, a prediction is very confident.")
    tau_high: Nats = Field(default=0.4, description="Above this, a prediction is barely confident.")


class CandidateSet(BaseModel):
    """Correctly predicted samples whose entropy exceeds `tau_high`, sorted by id."""

    model_config = ConfigDict(frozen=True)

    tau_high: Nats
    sample_ids: tuple[SampleId, ...] = ()

    def __len__(self) -> int:
        return len(self.sample_ids)

    def __iter__(self):  # type: ignore[override]
        return iter(self.sample_ids)

    def __contains__(self, sample_id: object) -> bool:
        return sample_id in self.sample_ids


class ErrorEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: SampleId
    spec: TransformSpec
    transformed_label: ClassIndex
    original_label: ClassIndex
    transformed_shannon: Nats

    @model_validator(mode="after")
    def check_mismatch(self) -> "ErrorEntry":
        if self.transformed_label == self.original_label:
            raise ValueError("an error entry needs a transformed prediction that differs from the label.")
        return self


class ErrorSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    attempts: Count = 0
    entries: tuple[ErrorEntry, ...] = ()

    @model_validator(mode="after")
    def check_counts(self) -> "ErrorSet":
        if len(self.entries) > self.attempts:
            raise ValueError(f"{len(self.entries)} errors out of {self.attempts} attempts.")
        return self

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def error_ratio(self) -> float | None:
        # Denominator is |G|, the candidates actually transformed.
        if self.attempts == 0:
            return None
        return len(self.entries) / self.attempts


class FlagEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_id: SampleId
    label: ClassIndex
    predicted: ClassIndex
    shannon: Nats

    @model_validator(mode="after")
    def check_mismatch(self) -> "FlagEntry":
        if self.label == self.predicted:
            raise ValueError("a flagged sample must be mispredicted.")
        return self


class FlagSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau_low: Nats
    entries: tuple[FlagEntry, ...] = ()

    def __len__(self) -> int:
        return len(self.entries)


class SweepPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    tau: Nats
    candidates: Count
    errors: Count
    error_ratio: float | None


class Minimisation(BaseModel):
    """How much transformation work the entropy filter saved against testing every sample."""

    samples: Count
    candidates: Count
    avoided_fraction: float | None = Field(
        description="Share of samples left untransformed; None for an empty dataset."
    )
