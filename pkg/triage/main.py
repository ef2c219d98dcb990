import click

from triage.commands.detect import detect_flags
from triage.commands.generate import generate_tests
from triage.commands.matrix import matrix
from triage.commands.replay import replay_errors
from triage.commands.scan import scan
from triage.commands.sweep import sweep
from triage.core.errors import register_exception_handlers
from triage.core.lifespan import configure_logging


@click.group(
    help="Entropy-guided metamorphic test minimisation and low-quality data detection for image classifiers."
)
@click.version_option("0.3.0", prog_name="shannon-triage")
@click.option("--log-level", help="Logging level (default from TRIAGE_LOG_LEVEL or INFO).")
def cli(log_level: str | None) -> None:
    configure_logging(log_level)


# Register exception handlers.
register_exception_handlers(cli)

# Subcommands, one module each.
cli.add_command(scan)
cli.add_command(generate_tests)
cli.add_command(detect_flags)
cli.add_command(matrix)
cli.add_command(sweep)
cli.add_command(replay_errors)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
