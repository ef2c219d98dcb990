import csv
import io
import json
import struct

import numpy as np
import pytest
from PIL import Image

from triage.core.datasets import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    image_to_png_bytes,
    load_cifar10_bin,
    load_dataset,
    load_idx_pair,
    load_image_dir,
    load_manifest,
    write_cifar10_bin,
    write_idx_pair,
)
from triage.core.errors import ConfigError, DatasetFormatError
from triage.models.dataset import ImageDirSplit, Sample


def idx_files(tmp_path, count=3, rows=2, cols=3, label_count=None, extra=b"", magic=IDX_IMAGES_MAGIC):
    images = tmp_path / "images.idx"
    labels = tmp_path / "labels.idx"
    pixels = bytes(range(count * rows * cols))
    images.write_bytes(struct.pack(">IIII", magic, count, rows, cols) + pixels + extra)
    label_count = count if label_count is None else label_count
    labels.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, label_count) + bytes(i % 10 for i in range(label_count)))
    return images, labels


def test_idx_pixels_and_ids(tmp_path):
    images, labels = idx_files(tmp_path)
    samples = load_idx_pair(images, labels, dataset="mnist", split="test")
    assert [s.id for s in samples] == ["mnist/test/0", "mnist/test/1", "mnist/test/2"]
    assert samples[1].shape == (2, 3, 1)
    assert samples[1].image[0, 0, 0] == 6 / 255.0
    assert [s.label for s in samples] == [0, 1, 2]


def test_idx_round_trip_is_byte_exact(tmp_path):
    images, labels = idx_files(tmp_path, count=4)
    samples = load_idx_pair(images, labels)
    write_idx_pair(samples, tmp_path / "copy-images.idx", tmp_path / "copy-labels.idx")
    assert (tmp_path / "copy-images.idx").read_bytes() == images.read_bytes()
    assert (tmp_path / "copy-labels.idx").read_bytes() == labels.read_bytes()


def test_idx_count_mismatch(tmp_path):
    images, labels = idx_files(tmp_path, count=3, label_count=2)
    with pytest.raises(DatasetFormatError, match="count mismatch") as excinfo:
        load_idx_pair(images, labels)
    assert excinfo.value.exit_code == 2
    assert excinfo.value.code == "dataset_format"


def test_idx_bad_magic(tmp_path):
    images, labels = idx_files(tmp_path, magic=0x00000802)
    with pytest.raises(DatasetFormatError, match="bad magic"):
        load_idx_pair(images, labels)


def test_idx_truncated(tmp_path):
    images, labels = idx_files(tmp_path)
    images.write_bytes(images.read_bytes()[:-1])
    with pytest.raises(DatasetFormatError, match="unexpected end"):
        load_idx_pair(images, labels)


def test_idx_truncated_header(tmp_path):
    images, labels = idx_files(tmp_path)
    images.write_bytes(images.read_bytes()[:10])
    with pytest.raises(DatasetFormatError, match="unexpected end"):
        load_idx_pair(images, labels)


def test_idx_trailing_bytes(tmp_path):
    images, labels = idx_files(tmp_path, extra=b"\0")
    with pytest.raises(DatasetFormatError, match="trailing"):
        load_idx_pair(images, labels)


def test_idx_label_out_of_range(tmp_path):
    images, labels = idx_files(tmp_path)
    with pytest.raises(DatasetFormatError, match="label 2"):
        load_idx_pair(images, labels, class_count=2)


def cifar_bytes(count: int) -> bytes:
    rng = np.random.default_rng(0)
    records = []
    for index in range(count):
        records.append(bytes([index % 10]) + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes())
    return b"".join(records)


def test_cifar_round_trip_and_layout(tmp_path):
    path = tmp_path / "test_batch.bin"
    data = cifar_bytes(3)
    path.write_bytes(data)
    samples = load_cifar10_bin([path])
    assert samples[2].shape == (32, 32, 3)
    assert samples[2].label == 2
    # Pixel (row 0, col 1) of the green plane sits 1024 + 1 bytes into the record body.
    assert samples[0].image[0, 1, 1] == data[1 + 1024 + 1] / 255.0
    write_cifar10_bin(samples, tmp_path / "copy.bin")
    assert (tmp_path / "copy.bin").read_bytes() == data


def test_cifar_ids_continue_across_files(tmp_path):
    first, second = tmp_path / "a.bin", tmp_path / "b.bin"
    first.write_bytes(cifar_bytes(2))
    second.write_bytes(cifar_bytes(1))
    samples = load_cifar10_bin([first, second], dataset="cifar10", split="train")
    assert [s.id for s in samples] == ["cifar10/train/0", "cifar10/train/1", "cifar10/train/2"]


def test_cifar_rejects_partial_record(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(cifar_bytes(2)[:-5])
    with pytest.raises(DatasetFormatError, match="multiple of 3073"):
        load_cifar10_bin([path])


def test_cifar_rejects_label_above_nine(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(bytes([10]) + bytes(3072))
    with pytest.raises(DatasetFormatError, match="label 10"):
        load_cifar10_bin([path])


def write_png(path, array):
    Image.fromarray(array).save(path)


def image_dir(tmp_path, rows, shapes=None):
    root = tmp_path / "images"
    root.mkdir()
    for index, (filename, _) in enumerate(rows):
        shape = shapes[index] if shapes else (3, 3)
        write_png(root / filename, np.full(shape, 10 * index, dtype=np.uint8))
    labels = tmp_path / "labels.csv"
    with labels.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)
    return ImageDirSplit(format="image-dir", root=root, labels_csv=labels)


def test_image_dir_in_csv_order(tmp_path):
    split = image_dir(tmp_path, [("b.png", "1"), ("a.png", "0")])
    samples = load_image_dir(split, dataset="pics", split_name="val", class_count=2)
    assert [s.id for s in samples] == ["pics/val/0", "pics/val/1"]
    assert [s.label for s in samples] == [1, 0]
    assert samples[1].image[0, 0, 0] == 10 / 255.0


def test_image_dir_non_uniform_shape(tmp_path):
    split = image_dir(tmp_path, [("a.png", "0"), ("b.png", "1")], shapes=[(3, 3), (4, 3)])
    with pytest.raises(DatasetFormatError, match="non-uniform shape: row 3"):
        load_image_dir(split, class_count=2)


def test_image_dir_label_out_of_range(tmp_path):
    split = image_dir(tmp_path, [("a.png", "5")])
    with pytest.raises(DatasetFormatError, match="row 2 label 5"):
        load_image_dir(split, class_count=2)


def assert_loaded_samples(samples, count, class_count):
    assert len(samples) == count
    for sample in samples:
        assert sample.image.dtype == np.float64
        assert 0.0 <= sample.image.min() and sample.image.max() <= 1.0
        assert 0 <= sample.label < class_count


@pytest.mark.parametrize("seed", range(10))
def test_idx_fuzz_stays_in_range(tmp_path, seed):
    rng = np.random.default_rng(seed)
    count, rows, cols = (int(v) for v in rng.integers(1, 12, size=3))
    class_count = int(rng.integers(2, 11))
    images, labels = tmp_path / "i.idx", tmp_path / "l.idx"
    pixels = rng.integers(0, 256, count * rows * cols, dtype=np.uint8).tobytes()
    images.write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols) + pixels)
    targets = rng.integers(0, class_count, count, dtype=np.uint8).tobytes()
    labels.write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, count) + targets)
    assert_loaded_samples(load_idx_pair(images, labels, class_count=class_count), count, class_count)


@pytest.mark.parametrize("seed", range(10))
def test_cifar_fuzz_stays_in_range(tmp_path, seed):
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, 6))
    records = b"".join(
        bytes([int(rng.integers(0, 10))]) + rng.integers(0, 256, 3072, dtype=np.uint8).tobytes()
        for _ in range(count)
    )
    path = tmp_path / "batch.bin"
    path.write_bytes(records)
    assert_loaded_samples(load_cifar10_bin([path]), count, 10)


@pytest.mark.parametrize("seed", range(10))
def test_image_dir_fuzz_stays_in_range(tmp_path, seed):
    rng = np.random.default_rng(seed)
    count = int(rng.integers(1, 6))
    class_count = int(rng.integers(2, 11))
    shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9))) + ((3,) if seed % 2 else ())
    root = tmp_path / "images"
    root.mkdir()
    rows = []
    for index in range(count):
        write_png(root / f"{index}.png", rng.integers(0, 256, shape, dtype=np.uint8))
        rows.append((f"{index}.png", str(int(rng.integers(0, class_count)))))
    labels = tmp_path / "labels.csv"
    with labels.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["filename", "label"])
        writer.writerows(rows)
    split = ImageDirSplit(format="image-dir", root=root, labels_csv=labels)
    assert_loaded_samples(load_image_dir(split, class_count=class_count), count, class_count)


def test_png_bytes_decode_to_same_pixels():
    image = np.arange(12, dtype=np.float64).reshape(2, 2, 3) / 255.0
    decoded = np.asarray(Image.open(io.BytesIO(image_to_png_bytes(image))))
    np.testing.assert_array_equal(decoded, np.arange(12).reshape(2, 2, 3))


def test_manifest_resolves_paths_and_loads(tmp_path):
    images, labels = idx_files(tmp_path)
    manifest_path = tmp_path / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "name": "digits",
                "class_count": 10,
                "splits": {"test": {"format": "idx", "images": images.name, "labels": labels.name}},
            }
        ),
        encoding="utf-8",
    )
    manifest = load_manifest(manifest_path)
    assert manifest.splits["test"].images == images.resolve()
    samples = load_dataset(manifest, ["test"])
    assert samples[0].id == "digits/test/0"
    assert manifest.class_names is None


def test_unknown_split_is_a_config_error(toy_dataset):
    manifest = load_manifest(toy_dataset["manifest"])
    with pytest.raises(ConfigError, match="no split 'train'"):
        load_dataset(manifest, ["train"])


def test_missing_split_file_is_a_config_error(toy_dataset):
    (toy_dataset["dir"] / "test-labels.idx").unlink()
    manifest = load_manifest(toy_dataset["manifest"])
    with pytest.raises(ConfigError, match="missing"):
        load_dataset(manifest, ["test"])


def test_manifest_errors(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_manifest(tmp_path / "none.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "a/b", "class_count": 2, "splits": {}}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_manifest(bad)


def test_toy_dataset_matches_fixture(toy_dataset, toy_samples):
    loaded = load_dataset(load_manifest(toy_dataset["manifest"]), ["test"])
    assert [s.id for s in loaded] == [s.id for s in toy_samples]
    for left, right in zip(loaded, toy_samples):
        np.testing.assert_array_equal(left.image, right.image)
        assert left.label == right.label


def test_samples_are_frozen():
    sample = Sample(id="x", image=np.zeros((1, 1, 1)), label=0)
    with pytest.raises(Exception):
        sample.label = 1  # type: ignore[misc]
