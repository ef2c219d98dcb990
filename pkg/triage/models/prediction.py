from pydantic import BaseModel, ConfigDict, Field

from triage.models.common import ClassIndex, Nats, SampleId


class PredictionRecord(BaseModel):
    """One classifier output joined to its sample.

    Build these through `triage.core.entropy.batch_records` so that
    `predicted_label` and `shannon` always agree with `probs`.
    """

    model_config = ConfigDict(frozen=True)

    sample_id: SampleId
    probs: tuple[float, ...] = Field(min_length=2)
    predicted_label: ClassIndex
    shannon: Nats

    @property
    def class_count(self) -> int:
        return len(self.probs)
