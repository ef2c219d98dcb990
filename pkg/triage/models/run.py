from pathlib import Path
from typing import Annotated, Literal

from pydantic import BaseModel, Field, field_validator, model_validator

from triage.models.report import ShannonSlice
from triage.models.selection import ThresholdConfig
from triage.models.transform import TransformPolicy

Mode = Literal["scan", "generate", "detect", "matrix", "sweep", "replay"]

# Modes that read both entropy bands; the others use one threshold only.
BOTH_THRESHOLD_MODES = frozenset({"scan"})


class CacheBackend(BaseModel):
    kind: Literal["prediction-cache"] = "prediction-cache"
    path: Path


class BuiltinBackend(BaseModel):
    kind: Literal["builtin-softmax"] = "builtin-softmax"
    path: Path


class ProcessBackend(BaseModel):
    kind: Literal["external-process"] = "external-process"
    command: list[str] = Field(min_length=1)
    timeout: float = Field(default=30.0, gt=0, description="Seconds per batch.")


BackendDescriptor = Annotated[
    CacheBackend | BuiltinBackend | ProcessBackend, Field(discriminator="kind")
]


class RunConfig(BaseModel):
    """Everything a run depends on. Two runs with equal configs write equal bytes."""

    dataset: Path = Field(description="Dataset manifest (JSON).")
    splits: list[str] = Field(default_factory=lambda: ["test"], min_length=1)
    backend: BackendDescriptor
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    policy: TransformPolicy = Field(default_factory=TransformPolicy)
    out: Path = Path("triage-out")
    mode: Mode | None = None
    taus: list[float] | None = None
    slices: list[str] = Field(default_factory=lambda: ["<0.001", ">0.4"], min_length=1)
    workers: int = Field(default=1, ge=1)
    gallery_error_previews: int = Field(default=25, ge=0)
    timestamp: str | None = None

    @field_validator("taus")
    @classmethod
    def check_taus(cls, taus: list[float] | None) -> list[float] | None:
        if taus is None:
            return None
        if not taus:
            raise ValueError("sweep needs at least one tau.")
        if any(tau < 0 for tau in taus):
            raise ValueError("sweep taus must be >= 0.")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError(f"sweep taus must be strictly increasing, got {taus}.")
        return taus

    @field_validator("slices")
    @classmethod
    def check_slices(cls, slices: list[str]) -> list[str]:
        for text in slices:
            ShannonSlice.parse(text)
        return slices

    @model_validator(mode="after")
    def check_mode(self) -> "RunConfig":
        if self.mode == "sweep" and self.taus is None:
            raise ValueError("sweep mode needs a 'taus' list.")
        thresholds = self.thresholds
        if self.mode in BOTH_THRESHOLD_MODES and not thresholds.tau_low < thresholds.tau_high:
            raise ValueError(
                f"tau_low ({thresholds.tau_low}) must be below tau_high ({thresholds.tau_high})."
            )
        return self

    def shannon_slices(self) -> list[ShannonSlice]:
        return [ShannonSlice.parse(text) for text in self.slices]
