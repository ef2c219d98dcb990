from enum import Enum
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from triage.models.common import FiniteFloat


class TransformKind(str, Enum):
    PAN = "pan"
    ROTATE2D = "rotate2d"
    AFFINE = "affine"
    PERSPECTIVE = "perspective"

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    TransformKind.PAN: "Panning",
    TransformKind.ROTATE2D: "2D rotation",
    TransformKind.AFFINE: "Affine",
    TransformKind.PERSPECTIVE: "Perspective",
}

ALL_KINDS = tuple(TransformKind)


class PanSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["pan"] = "pan"
    dx: FiniteFloat = Field(default=0.0, description="Shift right, in pixels.")
    dy: FiniteFloat = Field(default=0.0, description="Shift down, in pixels.")


class RotateSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["rotate2d"] = "rotate2d"
    angle: FiniteFloat = Field(
        default=0.0, description="Degrees, counter-clockwise as displayed, about the image centre."
    )


Row3 = tuple[FiniteFloat, FiniteFloat, FiniteFloat]


class AffineSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["affine"] = "affine"
    matrix: tuple[Row3, Row3] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))


class PerspectiveSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["perspective"] = "perspective"
    matrix: tuple[Row3, Row3, Row3] = (
        (1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0),
        (0.0, 0.0, 1.0),
    )

    @model_validator(mode="after")
    def check_normalized(self) -> "PerspectiveSpec":
        if self.matrix[2][2] != 1.0:
            raise ValueError("perspective matrix must have h33 = 1.")
        return self


TransformSpec = Annotated[
    PanSpec | RotateSpec | AffineSpec | PerspectiveSpec, Field(discriminator="kind")
]

Range = tuple[FiniteFloat, FiniteFloat]


class TransformPolicy(BaseModel):
    """Which kinds `choice` may draw and the parameter range of each.

    Pan, affine-shift and perspective ranges are fractions of the image size.
    """

    model_config = ConfigDict(frozen=True)

    kinds: tuple[TransformKind, ...] = ALL_KINDS
    pan_fraction: Range = (-0.1, 0.1)
    rotate_degrees: Range = (-15.0, 15.0)
    affine_linear: Range = (-0.1, 0.1)
    affine_shift_fraction: Range = (-0.1, 0.1)
    perspective_fraction: Range = (-0.1, 0.1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("kinds")
    @classmethod
    def canonical_kinds(cls, kinds: tuple[TransformKind, ...]) -> tuple[TransformKind, ...]:
        # Canonical order so that a draw depends on the set of kinds, not how it was spelled.
        return tuple(kind for kind in ALL_KINDS if kind in kinds)

    @field_validator(
        "pan_fraction",
        "rotate_degrees",
        "affine_linear",
        "affine_shift_fraction",
        "perspective_fraction",
    )
    @classmethod
    def check_range(cls, value: Range) -> Range:
        low, high = value
        if low > high:
            raise ValueError(f"empty range [{low}, {high}].")
        return value

    def only(self, kind: TransformKind) -> "TransformPolicy":
        return self.model_copy(update={"kinds": (kind,)})
