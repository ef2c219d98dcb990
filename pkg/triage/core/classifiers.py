"""Blackbox classifiers: image in, probability vector out.

Three backends share one surface (`predict`, `predict_batch`):

* builtin-softmax: a dense model loaded from a CMLP file, read-only after load.
* external-process: any model behind a line-delimited JSON protocol on a child's
  stdin/stdout. One child serves one request stream at a time; a handle holds a lock
  so concurrent callers queue up. Spawn several handles for parallelism.
* prediction-cache: replays stored vectors keyed by sample id. Transformed images
  are looked up as "{sample_id}+{kind}".

Images reach every backend as float arrays in [0, 1], shaped (height, width, channels).
"""

import csv
import itertools
import json
import logging
import queue
import subprocess
import threading
import time
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from triage.core.entropy import validate_distribution
from triage.core.errors import (
    BackendError,
    BackendTimeoutError,
    CacheMissError,
    DatasetFormatError,
    ExternalProcessError,
    InvalidDistributionError,
    ShapeMismatchError,
)
from triage.core.model_format import BuiltinSoftmaxModel

logger = logging.getLogger(__name__)

ImageShape = tuple[int, int, int]


def derived_id(sample_id: str, kind: str) -> str:
    """Cache key of a transformed image."""
    return f"{sample_id}+{kind}"


class ClassifierHandle(Protocol):
    backend_kind: str
    class_count: int
    input_shape: ImageShape

    def predict_many(
        self, images: Sequence[np.ndarray], sample_ids: Sequence[str | None]
    ) -> list[np.ndarray]: ...

    def describe(self) -> str: ...

    def close(self) -> None: ...


def _check_handle(class_count: int, input_shape: Sequence[int]) -> ImageShape:
    if class_count < 2:
        raise BackendError(f"class_count must be >= 2, got {class_count}.")
    shape = tuple(int(d) for d in input_shape)
    if len(shape) != 3 or min(shape) < 1:
        raise BackendError(f"input_shape must be (height, width, channels) >= 1, got {input_shape}.")
    return shape  # type: ignore[return-value]


class BuiltinSoftmaxClassifier:
    backend_kind = "builtin-softmax"

    def __init__(self, model: BuiltinSoftmaxModel, input_shape: Sequence[int]) -> None:
        self.model = model
        self.class_count = model.class_count
        self.input_shape = _check_handle(model.class_count, input_shape)
        features = int(np.prod(self.input_shape))
        if features != model.input_width:
            raise ShapeMismatchError(
                f"model expects {model.input_width} inputs, images have {features} "
                f"({'x'.join(map(str, self.input_shape))})."
            )

    def predict_many(
        self, images: Sequence[np.ndarray], sample_ids: Sequence[str | None]
    ) -> list[np.ndarray]:
        # One row at a time: results must not depend on how inputs were batched.
        return [self.model.forward(image.reshape(-1)) for image in images]

    def describe(self) -> str:
        widths = [self.model.input_width] + [layer.cols for layer in self.model.layers]
        return f"builtin-softmax({'-'.join(map(str, widths))})"

    def close(self) -> None:
        pass


class PredictionCacheClassifier:
    backend_kind = "prediction-cache"

    def __init__(
        self,
        table: dict[str, np.ndarray],
        input_shape: Sequence[int],
        source: str = "memory",
    ) -> None:
        if not table:
            raise BackendError("prediction cache is empty.")
        widths = {vector.size for vector in table.values()}
        if len(widths) != 1:
            raise InvalidDistributionError(
                f"inconsistent class count in prediction cache: {sorted(widths)}.",
                invariant="class_count",
            )
        for sample_id, vector in table.items():
            try:
                validate_distribution(vector)
            except InvalidDistributionError as exc:
                raise InvalidDistributionError(
                    f"cached sample '{sample_id}': {exc.message}", exc.invariant, exc.index
                )
        self.table = table
        self.class_count = widths.pop()
        self.input_shape = _check_handle(self.class_count, input_shape)
        self.source = source

    def __contains__(self, sample_id: object) -> bool:
        return sample_id in self.table

    def predict_many(
        self, images: Sequence[np.ndarray], sample_ids: Sequence[str | None]
    ) -> list[np.ndarray]:
        results = []
        for sample_id in sample_ids:
            if sample_id is None or sample_id not in self.table:
                raise CacheMissError(sample_id)
            results.append(self.table[sample_id])
        return results

    def describe(self) -> str:
        return f"prediction-cache({self.source})"

    def close(self) -> None:
        pass


def read_prediction_csv(path: Path | str) -> dict[str, np.ndarray]:
    """Read a `sample_id,p0,...,p{N-1}` file. Values round-trip bit-exactly through repr()."""
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise DatasetFormatError(f"prediction cache '{path}' does not exist.")
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "sample_id" or len(header) < 3:
            raise DatasetFormatError(f"{path}: header must be 'sample_id,p0,p1,...'.")
        expected = [f"p{i}" for i in range(len(header) - 1)]
        if header[1:] != expected:
            raise DatasetFormatError(f"{path}: probability columns must be named {','.join(expected)}.")
        table: dict[str, np.ndarray] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}.")
            if row[0] in table:
                raise DatasetFormatError(f"{path}:{line_no}: duplicate sample_id '{row[0]}'.")
            try:
                table[row[0]] = np.array([float(value) for value in row[1:]], dtype=np.float64)
            except ValueError:
                raise DatasetFormatError(f"{path}:{line_no}: non-numeric probability.")
    return table


def load_prediction_cache(path: Path | str, input_shape: Sequence[int]) -> PredictionCacheClassifier:
    table = read_prediction_csv(path)
    logger.info(f"Loaded {len(table)} cached predictions from {path}")
    return PredictionCacheClassifier(table, input_shape, source=Path(path).name)


class ExternalProcessClassifier:
    backend_kind = "external-process"

    def __init__(
        self,
        command: Sequence[str],
        class_count: int,
        input_shape: Sequence[int],
        timeout: float = 30.0,
    ) -> None:
        self.command = list(command)
        self.class_count = class_count
        self.input_shape = _check_handle(class_count, input_shape)
        self.timeout = timeout
        self._lock = threading.Lock()
        self._counter = itertools.count()
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._broken: str | None = None
        try:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise ExternalProcessError(f"cannot start {self.command[0]!r}: {exc}.")
        self._reader = threading.Thread(target=self._pump, name="triage-model-stdout", daemon=True)
        self._reader.start()
        logger.info(f"Started external model pid={self._process.pid}: {' '.join(self.command)}")

    def _pump(self) -> None:
        assert self._process.stdout is not None
        for line in self._process.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _exit_message(self) -> str:
        try:
            code = self._process.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            return "external process closed its output"
        return f"external process exited with code {code}"

    def _fail(self, error: BackendError) -> BackendError:
        self._broken = error.message
        self._terminate()
        return error

    def predict_many(
        self, images: Sequence[np.ndarray], sample_ids: Sequence[str | None]
    ) -> list[np.ndarray]:
        with self._lock:
            if self._broken:
                raise ExternalProcessError(f"handle is unusable after an earlier failure: {self._broken}")
            request_ids = [
                f"{sample_id or 'image'}#{next(self._counter)}" for sample_id in sample_ids
            ]
            payload = "".join(
                json.dumps(
                    {"id": request_id, "shape": list(self.input_shape), "pixels": image.reshape(-1).tolist()}
                )
                + "\n"
                for request_id, image in zip(request_ids, images)
            )
            # The deadline covers writing too: a child that stops reading fills the pipe.
            deadline = time.monotonic() + self.timeout
            writer = threading.Thread(
                target=self._feed, args=(payload,), name="triage-model-stdin", daemon=True
            )
            writer.start()
            results = []
            for index, request_id in enumerate(request_ids):
                try:
                    line = self._lines.get(timeout=max(deadline - time.monotonic(), 0.0))
                except queue.Empty:
                    raise self._fail(
                        BackendTimeoutError(
                            f"no response for '{request_id}' within {self.timeout:g} s."
                        )
                    )
                if line is None:
                    raise self._fail(ExternalProcessError(self._exit_message() + "."))
                try:
                    response = json.loads(line)
                except json.JSONDecodeError:
                    raise self._fail(ExternalProcessError(f"malformed response line: {line[:80]!r}."))
                if not isinstance(response, dict) or response.get("id") != request_id:
                    raise self._fail(
                        ExternalProcessError(
                            f"response out of order: expected id '{request_id}', got {str(response)[:80]}."
                        )
                    )
                if "error" in response:
                    # Drain the rest of the batch so the stream stays aligned.
                    self._drain(len(request_ids) - index - 1, deadline)
                    writer.join()
                    raise BackendError(
                        f"model reported: {response['error']}",
                        code="sample_failed",
                        index=index,
                        sample_id=sample_ids[index],
                    )
                try:
                    results.append(np.asarray(response.get("probs"), dtype=np.float64))
                except (TypeError, ValueError):
                    raise self._fail(
                        ExternalProcessError(f"response '{request_id}' has non-numeric probs.")
                    )
            writer.join()
            return results

    def _feed(self, payload: str) -> None:
        assert self._process.stdin is not None
        try:
            self._process.stdin.write(payload)
            self._process.stdin.flush()
        except (OSError, ValueError) as exc:
            # The read side reports the exit or the timeout.
            logger.debug(f"Writing requests failed: {exc}")

    def _drain(self, remaining: int, deadline: float) -> None:
        for _ in range(remaining):
            try:
                if self._lines.get(timeout=max(deadline - time.monotonic(), 0.0)) is None:
                    return
            except queue.Empty:
                self._fail(BackendTimeoutError("timed out while draining a failed batch."))
                return

    def describe(self) -> str:
        return f"external-process({' '.join(self.command)})"

    def _terminate(self) -> None:
        if self._process.poll() is None:
            self._process.kill()
            self._process.wait()

    def close(self) -> None:
        if self._process.stdin and not self._process.stdin.closed:
            try:
                self._process.stdin.close()
            except OSError:
                pass
        try:
            self._process.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self._terminate()
        logger.info(f"External model pid={self._process.pid} exited with {self._process.returncode}")


def _check_image(handle: ClassifierHandle, image: np.ndarray) -> np.ndarray:
    array = np.asarray(image, dtype=np.float64)
    if array.shape != handle.input_shape:
        raise ShapeMismatchError(f"image shape {array.shape} != classifier input {handle.input_shape}.")
    if not np.isfinite(array).all() or array.min(initial=0.0) < 0.0 or array.max(initial=0.0) > 1.0:
        raise BackendError("pixel values must lie in [0, 1].", code="invalid_image")
    return array


def predict_batch(
    handle: ClassifierHandle,
    images: Sequence[np.ndarray],
    sample_ids: Sequence[str | None] | None = None,
) -> list[np.ndarray]:
    """Elementwise `predict`, order-preserving. The first failing element aborts the batch."""
    if sample_ids is None:
        sample_ids = [None] * len(images)
    if len(sample_ids) != len(images):
        raise BackendError(f"{len(images)} images but {len(sample_ids)} sample ids.")
    if not images:
        return []
    checked = []
    for index, image in enumerate(images):
        try:
            checked.append(_check_image(handle, image))
        except BackendError as exc:
            exc.index, exc.sample_id = index, sample_ids[index]
            exc.message = f"batch element {index} ('{sample_ids[index]}'): {exc.message}"
            raise
    try:
        vectors = handle.predict_many(checked, sample_ids)
    except BackendError as exc:
        if exc.index is not None and exc.sample_id is None:
            exc.sample_id = sample_ids[exc.index]
        if exc.sample_id is not None and exc.index is None and exc.sample_id in sample_ids:
            exc.index = list(sample_ids).index(exc.sample_id)
        if exc.index is not None:
            exc.message = f"batch element {exc.index} ('{exc.sample_id}'): {exc.message}"
        raise
    results = []
    for index, vector in enumerate(vectors):
        if vector.size != handle.class_count:
            raise InvalidDistributionError(
                f"batch element {index} ('{sample_ids[index]}'): got {vector.size} probabilities, "
                f"expected {handle.class_count}.",
                invariant="class_count",
                index=index,
            )
        try:
            validate_distribution(vector)
        except InvalidDistributionError as exc:
            raise InvalidDistributionError(
                f"batch element {index} ('{sample_ids[index]}'): {exc.message}", exc.invariant, exc.index
            )
        results.append(vector)
    return results


def predict(
    handle: ClassifierHandle, image: np.ndarray, sample_id: str | None = None
) -> np.ndarray:
    return predict_batch(handle, [image], [sample_id])[0]
