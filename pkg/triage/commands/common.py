from functools import wraps
from pathlib import Path
from typing import Any, Callable

import click

from triage.core.config import load_run_config
from triage.core.errors import ConfigError, stage
from triage.models.run import Mode, RunConfig

# Options shared by every run command. Flags win over the config file.
_RUN_OPTIONS = [
    click.option(
        "--config",
        "config_path",
        type=click.Path(path_type=Path, dir_okay=False),
        help="JSON run config.",
    ),
    click.option("--dataset", type=click.Path(path_type=Path), help="Dataset manifest (JSON)."),
    click.option("--tau-low", type=float, help="Entropy below which a prediction is very confident."),
    click.option("--tau-high", type=float, help="Entropy above which a prediction is barely confident."),
    click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Transform policy seed."),
    click.option("--transforms", help="Comma list of kinds: pan,rotate2d,affine,perspective."),
    click.option("--backend", help="cache:PATH, builtin:PATH or process:COMMAND."),
    click.option("--workers", type=click.IntRange(min=1), help="Worker threads."),
    click.option("--out", type=click.Path(path_type=Path, file_okay=False), help="Output directory."),
]

_FLAG_NAMES = ("dataset", "tau_low", "tau_high", "seed", "transforms", "backend", "workers", "out")


def run_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    for option in reversed(_RUN_OPTIONS):
        fn = option(fn)
    return fn


def parse_taus(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--taus '{text}' must be a comma list of numbers.")


def build_config(mode: Mode, config_path: Path | None, **flags: Any) -> RunConfig:
    with stage("config"):
        if "taus" in flags:
            flags["taus"] = parse_taus(flags["taus"])
        return load_run_config(config_path, flags, mode=mode)


def echo_summary(**fields: Any) -> None:
    click.echo(" ".join(f"{key}={value}" for key, value in fields.items()))


def with_config(mode: Mode) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """Resolve the shared options into a RunConfig passed as the first argument."""

    def decorator(fn: Callable[..., Any]) -> Callable[..., Any]:
        @wraps(fn)
        def wrapper(config_path: Path | None, **options: Any) -> Any:
            shared = {key: options.pop(key) for key in _FLAG_NAMES}
            if "taus" in options:
                shared["taus"] = options.pop("taus")
            return fn(build_config(mode, config_path, **shared), **options)

        return run_options(wrapper)

    return decorator
