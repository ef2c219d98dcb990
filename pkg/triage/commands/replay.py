from pathlib import Path

import click

from triage.commands.common import echo_summary, with_config
from triage.core.errors import ReplayMismatchError, stage
from triage.core.lifespan import run_lifespan
from triage.core.repositories import read_error_entries
from triage.core.selection import replay
from triage.models.run import RunConfig


@click.command("replay", help="Re-apply the specs in an errors.jsonl and check every mismatch recurs.")
@click.argument("errors_jsonl", type=click.Path(path_type=Path, dir_okay=False))
@with_config("replay")
def replay_errors(config: RunConfig, errors_jsonl: Path) -> None:
    with stage("config"):
        entries = read_error_entries(errors_jsonl)
    with run_lifespan(config) as state:
        with stage("replay"):
            stale = replay(entries, state.classifier, state.sample_map)
        echo_summary(replayed=len(entries), reproduced=len(entries) - len(stale))
        if stale:
            for entry in stale:
                click.echo(f"not reproduced: {entry.sample_id} ({entry.spec.kind})", err=True)
            with stage("replay"):
                raise ReplayMismatchError(len(stale), len(entries))
