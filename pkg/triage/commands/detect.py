import click

from triage.commands.common import echo_summary, with_config
from triage.core.errors import stage
from triage.core.lifespan import run_lifespan
from triage.core.reports import gallery_from_flags, render
from triage.core.selection import detect
from triage.models.run import RunConfig


@click.command("detect", help="Flag confident mispredictions as suspected low-quality data.")
@with_config("detect")
def detect_flags(config: RunConfig) -> None:
    with run_lifespan(config) as state:
        records = state.records
        with stage("select"):
            flags = detect(records, state.labels, config.thresholds.tau_low)
        state.repo.write_flags(flags.entries)
        with stage("report"):
            report = gallery_from_flags(
                state.manifest.name, len(records), flags, state.metadata(), state.manifest.class_names
            )
            images = {entry.sample_id: state.sample_map[entry.sample_id].image for entry in flags.entries}
            state.repo.write_text("gallery.html", render(report, "html-gallery", images))
        echo_summary(samples=len(records), flagged=len(flags))
