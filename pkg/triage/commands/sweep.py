import click

from triage.commands.common import echo_summary, with_config
from triage.core.errors import stage
from triage.core.lifespan import run_lifespan
from triage.core.reports import sweep_csv
from triage.core.selection import threshold_sweep
from triage.models.run import RunConfig


@click.command("sweep", help="Error ratio of generate across a list of tau_high values.")
@click.option("--taus", help="Comma list of strictly increasing tau_high values.")
@with_config("sweep")
def sweep(config: RunConfig) -> None:
    with run_lifespan(config) as state:
        records = state.records
        with stage("generate"):
            points = threshold_sweep(
                records,
                state.labels,
                config.taus or [],
                config.policy,
                state.classifier,
                state.sample_map,
                workers=config.workers,
            )
        state.repo.write_text("sweep.csv", sweep_csv(points))
        echo_summary(points=len(points))
