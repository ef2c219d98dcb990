from pathlib import Path
from typing import Annotated, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from triage.models.common import ClassIndex, SampleId


class Sample(BaseModel):
    """One image with its ground-truth label.

    `image` is a float64 array shaped (height, width, channels) with values in [0, 1].
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: SampleId
    image: np.ndarray
    label: ClassIndex

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.image.shape)  # type: ignore[return-value]


class IdxSplit(BaseModel):
    format: Literal["idx"]
    images: Path
    labels: Path


class Cifar10Split(BaseModel):
    format: Literal["cifar10-bin"]
    files: list[Path] = Field(min_length=1)


class ImageDirSplit(BaseModel):
    format: Literal["image-dir"]
    root: Path
    labels_csv: Path = Field(description="CSV with a 'filename,label' header; filenames relative to root.")


SplitDescriptor = Annotated[
    IdxSplit | Cifar10Split | ImageDirSplit, Field(discriminator="format")
]


class DatasetManifest(BaseModel):
    name: str = Field(min_length=1, pattern=r"^[^/]+$")
    class_count: int = Field(ge=2)
    class_names: list[str] | None = None
    splits: dict[str, SplitDescriptor] = Field(min_length=1)

    @model_validator(mode="after")
    def check_class_names(self) -> "DatasetManifest":
        if self.class_names is not None and len(self.class_names) != self.class_count:
            raise ValueError(
                f"class_names has {len(self.class_names)} entries, expected {self.class_count}."
            )
        return self
