import hashlib
import json
import logging
from contextlib import contextmanager
from functools import cached_property
from typing import Iterator

from triage.core.classifiers import ClassifierHandle
from triage.core.config import get_settings
from triage.core.dependencies import get_manifest, get_records, get_samples, open_classifier
from triage.core.errors import ConfigError
from triage.core.repositories import ArtifactRepo
from triage.models.dataset import DatasetManifest, Sample
from triage.models.prediction import PredictionRecord
from triage.models.report import RunMetadata
from triage.models.run import RunConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Fields that decide whether an earlier run's predictions.csv is still valid.
_PREDICTION_INPUTS = ("dataset", "splits", "backend")
INPUTS_FILE = "inputs.json"


def configure_logging(level: str | None = None) -> None:
    """Log to stderr so artifacts never see log output."""
    logging.basicConfig(level=(level or get_settings().log_level).upper(), format=LOG_FORMAT, force=True)


class RunState:
    """What one command run holds: its config, artifacts and lazily opened inputs."""

    def __init__(self, config: RunConfig, repo: ArtifactRepo, reuse_predictions: bool) -> None:
        self.config = config
        self.repo = repo
        self.reuse_predictions = reuse_predictions
        self._classifier: ClassifierHandle | None = None

    @cached_property
    def manifest(self) -> DatasetManifest:
        return get_manifest(self.config)

    @cached_property
    def samples(self) -> list[Sample]:
        return get_samples(self.config, self.manifest)

    @cached_property
    def sample_map(self) -> dict[str, Sample]:
        return {sample.id: sample for sample in self.samples}

    @cached_property
    def labels(self) -> dict[str, int]:
        return {sample.id: sample.label for sample in self.samples}

    @property
    def classifier(self) -> ClassifierHandle:
        if self._classifier is None:
            self._classifier = open_classifier(
                self.config.backend, self.manifest.class_count, self.samples[0].shape
            )
        return self._classifier

    @cached_property
    def records(self) -> list[PredictionRecord]:
        return get_records(
            self.config, self.classifier, self.samples, self.repo, reuse=self.reuse_predictions
        )

    def metadata(self) -> RunMetadata:
        return RunMetadata(
            seed=self.config.policy.seed,
            policy=self.config.policy,
            thresholds=self.config.thresholds,
            slices=[s.label for s in self.config.shannon_slices()],
            classifier=self.classifier.describe(),
            timestamp=self.config.timestamp,
        )

    def close(self) -> None:
        if self._classifier is not None:
            self._classifier.close()
            self._classifier = None


def _same_prediction_inputs(repo: ArtifactRepo, config: RunConfig, backend_sha256: str | None) -> bool:
    target = repo.path("config.json")
    if not target.exists():
        return False
    try:
        previous = json.loads(target.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    current = json.loads(config.model_dump_json())
    if not all(previous.get(key) == current.get(key) for key in _PREDICTION_INPUTS):
        return False
    try:
        recorded = json.loads(repo.path(INPUTS_FILE).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return False
    if recorded.get("backend_sha256") != backend_sha256:
        logger.info("Backend file changed since the last run; predicting again")
        return False
    return True


def backend_digest(config: RunConfig) -> str | None:
    """SHA-256 of the backend's file; None for process backends or a missing file."""
    path = getattr(config.backend, "path", None)
    if path is None or not path.is_file():
        return None
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@contextmanager
def run_lifespan(config: RunConfig) -> Iterator[RunState]:
    """Run lifespan: output directory and provenance on entry, classifier shutdown on exit."""
    try:
        config.out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory '{config.out}': {exc}.")
    repo = ArtifactRepo(config.out)
    backend_sha256 = backend_digest(config)
    reuse = _same_prediction_inputs(repo, config, backend_sha256)
    repo.write_model("config.json", config)
    repo.write_json(INPUTS_FILE, {"backend_sha256": backend_sha256})
    state = RunState(config, repo, reuse)
    logger.info(f"Run mode={config.mode} out={config.out}")
    try:
        yield state
    finally:
        state.close()
