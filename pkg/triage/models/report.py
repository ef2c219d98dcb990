import math
import re
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from triage.models.common import Count, FiniteFloat
from triage.models.selection import ErrorEntry, FlagEntry, ThresholdConfig
from triage.models.transform import TransformKind, TransformPolicy

_SLICE_PATTERN = re.compile(r"^\s*(?:s_x\s*)?(<|>)\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*$")


class ShannonSlice(BaseModel):
    """A predicate over entropy values: `< v`, `> v`, or `all`."""

    model_config = ConfigDict(frozen=True)

    op: Literal["<", ">", "all"]
    value: FiniteFloat = Field(default=0.0, ge=0)

    @classmethod
    def parse(cls, text: str) -> "ShannonSlice":
        if text.strip().lower() == "all":
            return cls(op="all")
        match = _SLICE_PATTERN.match(text)
        if not match:
            raise ValueError(f"cannot parse slice '{text}'; use '<0.001', '>0.4' or 'all'.")
        return cls(op=match.group(1), value=float(match.group(2)))  # type: ignore[arg-type]

    @property
    def label(self) -> str:
        if self.op == "all":
            return "all"
        return f"s_x {self.op} {self.value:g}"

    def contains(self, shannon: float) -> bool:
        if self.op == "all":
            return True
        if self.op == "<":
            return shannon < self.value
        return shannon > self.value


class MatrixCell(BaseModel):
    model_config = ConfigDict(frozen=True)

    slice: str
    kind: TransformKind
    attempts: Count
    errors: Count
    ratio: float | None

    @model_validator(mode="after")
    def check_ratio(self) -> "MatrixCell":
        if self.errors > self.attempts:
            raise ValueError(f"{self.errors} errors out of {self.attempts} attempts.")
        if self.attempts == 0:
            if self.ratio is not None:
                raise ValueError("a cell without attempts has no ratio.")
        elif self.ratio is None or not math.isclose(self.ratio, self.errors / self.attempts):
            raise ValueError(f"ratio {self.ratio} != {self.errors}/{self.attempts}.")
        return self


class FlagSummary(BaseModel):
    count: Count = 0
    previews: list[FlagEntry] = Field(default_factory=list)


class RunMetadata(BaseModel):
    seed: int
    policy: TransformPolicy
    thresholds: ThresholdConfig
    slices: list[str] = Field(default_factory=list)
    classifier: str
    timestamp: str | None = None


class TriageReport(BaseModel):
    report_version: Literal[1] = 1
    dataset: str
    samples: Count = 0
    cells: list[MatrixCell] = Field(default_factory=list)
    flags: FlagSummary = Field(default_factory=FlagSummary)
    error_previews: list[ErrorEntry] = Field(default_factory=list)
    class_names: list[str] | None = None
    metadata: RunMetadata

    @model_validator(mode="after")
    def check_flags(self) -> "TriageReport":
        if len(self.flags.previews) > self.flags.count:
            raise ValueError("more flag previews than flags.")
        return self

    def cell(self, slice_label: str, kind: TransformKind) -> MatrixCell | None:
        for cell in self.cells:
            if cell.slice == slice_label and cell.kind == kind:
                return cell
        return None
