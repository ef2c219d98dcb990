import json
import logging
import os
import shlex
from functools import lru_cache
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError, field_validator

from triage.core.errors import ConfigError
from triage.models.run import RunConfig
from triage.models.transform import TransformKind

logger = logging.getLogger(__name__)

ENV_PREFIX = "TRIAGE_"


class Settings(BaseModel):
    log_level: str = "INFO"
    # Sum-to-one slack for probability vectors that went through float serialization.
    norm_tolerance: float = 1e-4
    default_tau_low: float = 0.1
    default_tau_high: float = 0.4
    external_timeout: float = 30.0
    default_slices: list[str] = ["<0.001", ">0.4"]
    gallery_error_previews: int = 25
    workers: int = 1

    @field_validator("default_slices", mode="before")
    @classmethod
    def split_slices(cls, value: Any) -> Any:
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value


@lru_cache
def get_settings() -> Settings:
    # Optional: TRIAGE_* variables, from the environment or a .env file.
    load_dotenv()
    values = {
        name: os.environ[ENV_PREFIX + name.upper()]
        for name in Settings.model_fields
        if ENV_PREFIX + name.upper() in os.environ
    }
    return Settings.model_validate(values)


def _describe(exc: ValidationError) -> str:
    problems = []
    for error in exc.errors():
        where = ".".join(str(part) for part in error["loc"]) or "config"
        problems.append(f"{where}: {error['msg']}")
    return "; ".join(problems)


def parse_backend(text: str) -> dict[str, Any]:
    """Parse a `--backend` value: `cache:<csv>`, `builtin:<model>` or `process:<command>`."""
    kind, sep, value = text.partition(":")
    if not sep or not value:
        raise ConfigError(f"--backend '{text}' must look like 'cache:PATH', 'builtin:PATH' or 'process:CMD'.")
    if kind == "cache":
        return {"kind": "prediction-cache", "path": value}
    if kind == "builtin":
        return {"kind": "builtin-softmax", "path": value}
    if kind == "process":
        return {"kind": "external-process", "command": shlex.split(value)}
    raise ConfigError(f"unknown backend kind '{kind}'.")


def parse_transforms(text: str) -> list[str]:
    kinds = [part.strip() for part in text.split(",") if part.strip()]
    known = {kind.value for kind in TransformKind}
    unknown = [kind for kind in kinds if kind not in known]
    if unknown or not kinds:
        raise ConfigError(
            f"--transforms '{text}' must list kinds from {sorted(known)}."
        )
    return kinds


def _resolve(base: Path, value: Any) -> Any:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def resolve_paths(raw: dict[str, Any], base: Path) -> dict[str, Any]:
    """Make the file paths in a raw config document absolute against `base`."""
    resolved = dict(raw)
    for key in ("dataset", "out"):
        if key in resolved:
            resolved[key] = _resolve(base, resolved[key])
    backend = resolved.get("backend")
    if isinstance(backend, dict) and "path" in backend:
        resolved["backend"] = {**backend, "path": _resolve(base, backend["path"])}
    return resolved


def load_run_config(
    path: Path | None,
    overrides: dict[str, Any] | None = None,
    mode: str | None = None,
) -> RunConfig:
    """Read the JSON run config and apply CLI overrides. Flags win over file values.

    Overrides use flat keys: tau_low, tau_high, seed, transforms, backend, workers, out.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file '{path}' does not exist.")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file '{path}' is not valid JSON: {exc}.")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file '{path}' must hold a JSON object.")
        raw = resolve_paths(raw, Path(path).resolve().parent)

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    settings = get_settings()
    thresholds = dict(raw.get("thresholds") or {})
    thresholds.setdefault("tau_low", settings.default_tau_low)
    thresholds.setdefault("tau_high", settings.default_tau_high)
    policy = dict(raw.get("policy") or {})
    raw.setdefault("slices", settings.default_slices)
    raw.setdefault("workers", settings.workers)
    raw.setdefault("gallery_error_previews", settings.gallery_error_previews)

    cwd = Path.cwd()
    if "tau_low" in overrides:
        thresholds["tau_low"] = overrides["tau_low"]
    if "tau_high" in overrides:
        thresholds["tau_high"] = overrides["tau_high"]
    if "seed" in overrides:
        policy["seed"] = overrides["seed"]
    if "transforms" in overrides:
        policy["kinds"] = parse_transforms(overrides["transforms"])
    if "backend" in overrides:
        raw["backend"] = resolve_paths({"backend": parse_backend(overrides["backend"])}, cwd)["backend"]
    if "workers" in overrides:
        raw["workers"] = overrides["workers"]
    if "out" in overrides:
        raw["out"] = _resolve(cwd, overrides["out"])
    if "dataset" in overrides:
        raw["dataset"] = _resolve(cwd, overrides["dataset"])
    if "taus" in overrides:
        raw["taus"] = overrides["taus"]
    if mode is not None:
        raw["mode"] = mode

    backend = raw.get("backend")
    if isinstance(backend, dict) and backend.get("kind") == "external-process":
        raw["backend"] = {"timeout": settings.external_timeout, **backend}

    raw["thresholds"] = thresholds
    raw["policy"] = policy
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc))
    logger.debug(f"Resolved run config for mode={config.mode}")
    return config
