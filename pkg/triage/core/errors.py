import logging
from contextlib import contextmanager
from typing import Iterator

import click

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class DomainError(Exception):
    def __init__(
        self,
        message: str,
        code: str = "domain_error",
        exit_code: int = EXIT_CONFIG,
        stage: str | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.code = code
        self.exit_code = exit_code
        self.stage = stage

    # Example usage:
    # raise DomainError("Unknown split 'dev'", code="config_error", exit_code=2)


class ConfigError(DomainError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="config_error", exit_code=EXIT_CONFIG)


class DatasetFormatError(DomainError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="dataset_format", exit_code=EXIT_CONFIG)


class ModelFormatError(DomainError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="model_format", exit_code=EXIT_CONFIG)


class TransformError(DomainError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="transform_error", exit_code=EXIT_CONFIG)


class SelectionError(DomainError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="selection_error", exit_code=EXIT_CONFIG)


class InvalidDistributionError(DomainError, ValueError):
    """A probability vector broke one of its invariants.

    `invariant` names the rule (``sum``, ``range``, ``finite``, ``class_count``,
    ``shape``) and `index` the offending entry when there is one.
    """

    def __init__(self, message: str, invariant: str, index: int | None = None) -> None:
        super().__init__(message, code="invalid_distribution", exit_code=EXIT_RUNTIME)
        self.invariant = invariant
        self.index = index


class BackendError(DomainError):
    def __init__(
        self,
        message: str,
        code: str = "backend_error",
        index: int | None = None,
        sample_id: str | None = None,
    ) -> None:
        super().__init__(message, code=code, exit_code=EXIT_RUNTIME)
        self.index = index
        self.sample_id = sample_id


class ShapeMismatchError(BackendError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="shape_mismatch")


class ExternalProcessError(BackendError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="external_process")


class BackendTimeoutError(BackendError):
    def __init__(self, message: str) -> None:
        super().__init__(message, code="backend_timeout")


class CacheMissError(BackendError):
    def __init__(self, sample_id: str | None) -> None:
        super().__init__(
            f"No cached prediction for sample '{sample_id}'.",
            code="cache_miss",
            sample_id=sample_id,
        )


class ReplayMismatchError(DomainError):
    def __init__(self, stale: int, total: int) -> None:
        super().__init__(
            f"{stale} of {total} recorded errors did not reproduce.",
            code="replay_mismatch",
            exit_code=EXIT_RUNTIME,
        )


@contextmanager
def stage(name: str) -> Iterator[None]:
    """Tag any DomainError escaping the block with the pipeline stage it came from."""
    try:
        yield
    except DomainError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def register_exception_handlers(cli: click.Group) -> None:
    invoke = cli.invoke

    # Domain errors become one stderr line and their stable exit code.
    def handle_domain_error(ctx: click.Context):
        try:
            return invoke(ctx)
        except DomainError as exc:
            where = exc.stage or "run"
            logger.debug(f"{where} failed with {exc.code}", exc_info=exc)
            click.echo(f"error[{exc.code}] {where}: {exc.message}", err=True)
            ctx.exit(exc.exit_code)

    cli.invoke = handle_domain_error  # type: ignore[method-assign]
