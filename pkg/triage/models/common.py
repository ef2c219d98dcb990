from typing import Annotated

from pydantic import Field

SampleId = Annotated[str, Field(min_length=1, description="'{dataset}/{split}/{index}'.")]
ClassIndex = Annotated[int, Field(ge=0, description="Zero-based class index.")]
Nats = Annotated[float, Field(ge=0, allow_inf_nan=False, description="Entropy in nats.")]
FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]
Count = Annotated[int, Field(ge=0)]
