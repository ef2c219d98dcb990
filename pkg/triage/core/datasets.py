"""Dataset loaders. Every loader yields Samples with [0, 1] float pixels (bytes / 255).

Sample ids are "{dataset}/{split}/{index}" and are the join key between datasets,
prediction caches and reports.
"""

import csv
import io
import json
import logging
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from triage.core.errors import ConfigError, DatasetFormatError
from triage.models.dataset import (
    Cifar10Split,
    DatasetManifest,
    IdxSplit,
    ImageDirSplit,
    Sample,
)

logger = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR10_RECORD = 3073
CIFAR10_SIDE = 32
CIFAR10_CLASSES = 10


def sample_id(dataset: str, split: str, index: int) -> str:
    return f"{dataset}/{split}/{index}"


def _read(path: Path | str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"dataset file '{path}' does not exist.")


def _check_labels(labels: np.ndarray, class_count: int | None, where: str) -> None:
    if class_count is None:
        return
    bad = np.flatnonzero(labels >= class_count)
    if bad.size:
        index = int(bad[0])
        raise DatasetFormatError(
            f"{where}: label {int(labels[index])} at index {index} is outside [0, {class_count})."
        )


def load_idx_pair(
    images_path: Path | str,
    labels_path: Path | str,
    *,
    dataset: str = "idx",
    split: str = "test",
    class_count: int | None = None,
) -> list[Sample]:
    # Images: magic | count | rows | cols | u8 pixels. Labels: magic | count | u8 labels.
    # All header fields are big-endian u32.
    image_bytes = _read(images_path)
    label_bytes = _read(labels_path)
    if len(image_bytes) < 16:
        raise DatasetFormatError(f"{images_path}: unexpected end of IDX header.")
    if len(label_bytes) < 8:
        raise DatasetFormatError(f"{labels_path}: unexpected end of IDX header.")
    magic, count, rows, cols = struct.unpack(">IIII", image_bytes[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DatasetFormatError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}."
        )
    label_magic, label_count = struct.unpack(">II", label_bytes[:8])
    if label_magic != IDX_LABELS_MAGIC:
        raise DatasetFormatError(
            f"{labels_path}: bad magic 0x{label_magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}."
        )
    if count != label_count:
        raise DatasetFormatError(
            f"count mismatch: {images_path} holds {count} images, {labels_path} holds {label_count} labels."
        )
    pixel_count = count * rows * cols
    if len(image_bytes) - 16 < pixel_count:
        raise DatasetFormatError(f"{images_path}: truncated, unexpected end of IDX data.")
    if len(label_bytes) - 8 < count:
        raise DatasetFormatError(f"{labels_path}: truncated, unexpected end of IDX data.")
    if len(image_bytes) - 16 > pixel_count or len(label_bytes) - 8 > count:
        raise DatasetFormatError(f"trailing bytes after IDX data in {images_path} or {labels_path}.")

    pixels = np.frombuffer(image_bytes, dtype=np.uint8, offset=16).reshape(count, rows, cols, 1)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, offset=8)
    _check_labels(labels, class_count, str(labels_path))
    images = pixels.astype(np.float64) / 255.0
    logger.info(f"Loaded {count} IDX samples ({rows}x{cols}) from {images_path}")
    return [
        Sample(id=sample_id(dataset, split, index), image=images[index], label=int(labels[index]))
        for index in range(count)
    ]


def _to_bytes(image: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_idx_pair(samples: Sequence[Sample], images_path: Path | str, labels_path: Path | str) -> None:
    if samples:
        shape = samples[0].shape
        if shape[2] != 1 or any(s.shape != shape for s in samples):
            raise DatasetFormatError("IDX needs single-channel images of one shape.")
        rows, cols = shape[0], shape[1]
    else:
        rows = cols = 0
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, len(samples), rows, cols)
    body = b"".join(_to_bytes(s.image).tobytes() for s in samples)
    Path(images_path).write_bytes(header + body)
    labels = bytes(s.label for s in samples)
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(samples)) + labels)


def load_cifar10_bin(
    paths: Iterable[Path | str], *, dataset: str = "cifar10", split: str = "test"
) -> list[Sample]:
    # Record: label u8 | 1024 red | 1024 green | 1024 blue, each plane row-major.
    samples: list[Sample] = []
    for path in paths:
        data = _read(path)
        if len(data) % CIFAR10_RECORD:
            raise DatasetFormatError(
                f"{path}: size {len(data)} is not a multiple of {CIFAR10_RECORD} bytes."
            )
        records = np.frombuffer(data, dtype=np.uint8).reshape(-1, CIFAR10_RECORD)
        labels = records[:, 0]
        bad = np.flatnonzero(labels >= CIFAR10_CLASSES)
        if bad.size:
            raise DatasetFormatError(
                f"{path}: record {int(bad[0])} has label {int(labels[bad[0]])} > 9."
            )
        planar = records[:, 1:].reshape(-1, 3, CIFAR10_SIDE, CIFAR10_SIDE)
        images = planar.transpose(0, 2, 3, 1).astype(np.float64) / 255.0
        offset = len(samples)
        samples.extend(
            Sample(
                id=sample_id(dataset, split, offset + index),
                image=np.ascontiguousarray(images[index]),
                label=int(labels[index]),
            )
            for index in range(len(records))
        )
        logger.info(f"Loaded {len(records)} CIFAR-10 records from {path}")
    return samples


def write_cifar10_bin(samples: Sequence[Sample], path: Path | str) -> None:
    chunks = []
    for sample in samples:
        if sample.shape != (CIFAR10_SIDE, CIFAR10_SIDE, 3):
            raise DatasetFormatError(f"'{sample.id}' is not a 32x32x3 image.")
        chunks.append(bytes([sample.label]))
        chunks.append(_to_bytes(sample.image).transpose(2, 0, 1).tobytes())
    Path(path).write_bytes(b"".join(chunks))


def _decode_png(path: Path) -> np.ndarray:
    with Image.open(path) as image:
        if image.mode in ("1", "LA", "I", "I;16", "F"):
            image = image.convert("L")
        elif image.mode not in ("L", "RGB"):
            image = image.convert("RGB")
        array = np.asarray(image, dtype=np.uint8)
    if array.ndim == 2:
        array = array[:, :, np.newaxis]
    return array.astype(np.float64) / 255.0


def load_image_dir(
    split: ImageDirSplit,
    *,
    dataset: str = "images",
    split_name: str = "test",
    class_count: int | None = None,
) -> list[Sample]:
    """Load PNGs listed in a `filename,label` CSV, in CSV order."""
    try:
        handle = Path(split.labels_csv).open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DatasetFormatError(f"label file '{split.labels_csv}' does not exist.")
    with handle:
        rows = list(csv.DictReader(handle))
    samples: list[Sample] = []
    expected: tuple[int, ...] | None = None
    for row_no, row in enumerate(rows, start=2):
        filename, raw_label = row.get("filename"), row.get("label")
        if not filename or raw_label is None:
            raise DatasetFormatError(f"{split.labels_csv}: row {row_no} needs 'filename' and 'label'.")
        try:
            label = int(raw_label)
        except ValueError:
            raise DatasetFormatError(f"{split.labels_csv}: row {row_no} has non-integer label '{raw_label}'.")
        if label < 0 or (class_count is not None and label >= class_count):
            raise DatasetFormatError(
                f"{split.labels_csv}: row {row_no} label {label} is outside [0, {class_count})."
            )
        path = Path(split.root) / filename
        if not path.is_file():
            raise DatasetFormatError(f"{split.labels_csv}: row {row_no} points to missing file '{path}'.")
        try:
            image = _decode_png(path)
        except (UnidentifiedImageError, OSError) as exc:
            raise DatasetFormatError(f"{split.labels_csv}: row {row_no} cannot be decoded: {exc}.")
        if expected is None:
            expected = image.shape
        elif image.shape != expected:
            raise DatasetFormatError(
                f"non-uniform shape: row {row_no} ('{filename}') is {image.shape}, expected {expected}."
            )
        samples.append(Sample(id=sample_id(dataset, split_name, len(samples)), image=image, label=label))
    logger.info(f"Loaded {len(samples)} images from {split.root}")
    return samples


def image_to_png_bytes(image: np.ndarray) -> bytes:
    pixels = _to_bytes(np.asarray(image))
    if pixels.shape[2] == 1:
        picture = Image.fromarray(pixels[:, :, 0])
    else:
        picture = Image.fromarray(np.ascontiguousarray(pixels[:, :, :3]))
    buffer = io.BytesIO()
    picture.save(buffer, format="PNG")
    return buffer.getvalue()


def load_manifest(path: Path | str) -> DatasetManifest:
    """Read a JSON manifest; relative file paths resolve against its directory."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"dataset manifest '{path}' does not exist.")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"dataset manifest '{path}' is not valid JSON: {exc}.")
    try:
        manifest = DatasetManifest.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"dataset manifest '{path}': {exc.errors()[0]['msg']}.")
    base = path.resolve().parent

    def resolve(value: Path) -> Path:
        return value if value.is_absolute() else base / value

    splits = {}
    for name, split in manifest.splits.items():
        if isinstance(split, IdxSplit):
            splits[name] = split.model_copy(
                update={"images": resolve(split.images), "labels": resolve(split.labels)}
            )
        elif isinstance(split, Cifar10Split):
            splits[name] = split.model_copy(update={"files": [resolve(f) for f in split.files]})
        else:
            splits[name] = split.model_copy(
                update={"root": resolve(split.root), "labels_csv": resolve(split.labels_csv)}
            )
    return manifest.model_copy(update={"splits": splits})


def _split_files(split: IdxSplit | Cifar10Split | ImageDirSplit) -> list[Path]:
    if isinstance(split, IdxSplit):
        return [split.images, split.labels]
    if isinstance(split, Cifar10Split):
        return list(split.files)
    return [split.labels_csv]


def load_dataset(manifest: DatasetManifest, splits: Sequence[str]) -> list[Sample]:
    samples: list[Sample] = []
    for name in splits:
        split = manifest.splits.get(name)
        if split is None:
            raise ConfigError(
                f"dataset '{manifest.name}' has no split '{name}' (available: {sorted(manifest.splits)})."
            )
        missing = [str(f) for f in _split_files(split) if not Path(f).exists()]
        if missing:
            raise ConfigError(f"dataset '{manifest.name}' split '{name}' is missing {', '.join(missing)}.")
        if isinstance(split, IdxSplit):
            loaded = load_idx_pair(
                split.images, split.labels,
                dataset=manifest.name, split=name, class_count=manifest.class_count,
            )
        elif isinstance(split, Cifar10Split):
            if manifest.class_count != CIFAR10_CLASSES:
                raise ConfigError(f"cifar10-bin splits need class_count 10, manifest says {manifest.class_count}.")
            loaded = load_cifar10_bin(split.files, dataset=manifest.name, split=name)
        else:
            loaded = load_image_dir(
                split, dataset=manifest.name, split_name=name, class_count=manifest.class_count
            )
        if samples and loaded and loaded[0].shape != samples[0].shape:
            raise DatasetFormatError(
                f"non-uniform shape: split '{name}' is {loaded[0].shape}, earlier splits are {samples[0].shape}."
            )
        samples.extend(loaded)
    return samples
