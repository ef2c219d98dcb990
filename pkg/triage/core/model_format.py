"""Portable dense-softmax model format ("CMLP").

Layout, little-endian::

    b"CMLP" | version u32 | layer count u32
    per layer: rows u32 | cols u32 | activation u8 | rows*cols float32 (row-major) | cols float32

A layer maps `rows` inputs to `cols` outputs (x @ W + b). Softmax after the last layer is implied.
"""

import logging
import struct
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.special import softmax

from triage.core.errors import ModelFormatError

logger = logging.getLogger(__name__)

MAGIC = b"CMLP"
VERSION = 1
_ACTIVATIONS: dict[int, Literal["none", "relu"]] = {0: "none", 1: "relu"}
_ACTIVATION_CODES = {name: code for code, name in _ACTIVATIONS.items()}


class DenseLayer(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: np.ndarray  # float32, (rows, cols)
    bias: np.ndarray  # float32, (cols,)
    activation: Literal["none", "relu"] = "none"

    @model_validator(mode="after")
    def check_shapes(self) -> "DenseLayer":
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise ValueError("weights must be 2-D and bias 1-D.")
        if self.weights.shape[1] != self.bias.shape[0]:
            raise ValueError(
                f"bias has {self.bias.shape[0]} entries for {self.weights.shape[1]} outputs."
            )
        return self

    @property
    def rows(self) -> int:
        return int(self.weights.shape[0])

    @property
    def cols(self) -> int:
        return int(self.weights.shape[1])


class BuiltinSoftmaxModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    layers: tuple[DenseLayer, ...]

    @model_validator(mode="after")
    def check_chain(self) -> "BuiltinSoftmaxModel":
        if not self.layers:
            raise ValueError("a model needs at least one layer.")
        for index, (left, right) in enumerate(zip(self.layers, self.layers[1:]), start=1):
            if left.cols != right.rows:
                raise ValueError(
                    f"dimension chain break at layer {index}: {left.cols} outputs feed {right.rows} inputs."
                )
        if self.class_count < 2:
            raise ValueError(f"final layer width must be >= 2, got {self.class_count}.")
        return self

    @property
    def input_width(self) -> int:
        return self.layers[0].rows

    @property
    def class_count(self) -> int:
        return self.layers[-1].cols

    def logits(self, features: np.ndarray) -> np.ndarray:
        """Final-layer outputs for one flattened input, computed in float64."""
        x = np.asarray(features, dtype=np.float64)
        for layer in self.layers:
            x = x @ layer.weights.astype(np.float64) + layer.bias.astype(np.float64)
            if layer.activation == "relu":
                x = np.maximum(x, 0.0)
        return x

    def forward(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features))


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise ModelFormatError("unexpected end of model file.")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_model(data: bytes) -> BuiltinSoftmaxModel:
    reader = _Reader(data)
    magic = reader.take(len(MAGIC))
    if magic != MAGIC:
        raise ModelFormatError(f"magic mismatch: expected {MAGIC!r}, found {magic!r}.")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}.")
    (layer_count,) = reader.unpack("<I")
    layers = []
    for index in range(layer_count):
        rows, cols, code = reader.unpack("<IIB")
        if rows < 1 or cols < 1:
            raise ModelFormatError(f"layer {index} has an empty {rows}x{cols} weight matrix.")
        if code not in _ACTIVATIONS:
            raise ModelFormatError(f"layer {index} has unknown activation code {code}.")
        weights = np.frombuffer(reader.take(4 * rows * cols), dtype="<f4").reshape(rows, cols)
        bias = np.frombuffer(reader.take(4 * cols), dtype="<f4")
        if not (np.isfinite(weights).all() and np.isfinite(bias).all()):
            raise ModelFormatError(f"layer {index} holds non-finite weights.")
        layers.append(
            DenseLayer(
                weights=weights.astype(np.float32),
                bias=bias.astype(np.float32),
                activation=_ACTIVATIONS[code],
            )
        )
    if reader.offset != len(data):
        raise ModelFormatError(f"{len(data) - reader.offset} trailing bytes after the last layer.")
    try:
        return BuiltinSoftmaxModel(layers=tuple(layers))
    except ValueError as exc:
        raise ModelFormatError(str(exc))


def encode_model(model: BuiltinSoftmaxModel) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(model.layers))]
    for layer in model.layers:
        parts.append(struct.pack("<IIB", layer.rows, layer.cols, _ACTIVATION_CODES[layer.activation]))
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    return b"".join(parts)


def load_builtin_model(path: Path | str) -> BuiltinSoftmaxModel:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise ModelFormatError(f"model file '{path}' does not exist.")
    model = decode_model(data)
    logger.info(
        f"Loaded builtin model {path}: {model.input_width} -> "
        + " -> ".join(str(layer.cols) for layer in model.layers)
    )
    return model


def save_builtin_model(model: BuiltinSoftmaxModel, path: Path | str) -> None:
    Path(path).write_bytes(encode_model(model))
