import click

from triage.commands.common import echo_summary, with_config
from triage.core.errors import stage
from triage.core.lifespan import run_lifespan
from triage.core.reports import build_matrix_report, render
from triage.core.selection import detect
from triage.models.run import RunConfig


@click.command("matrix", help="Error ratio per (Shannon slice, transform kind).")
@with_config("matrix")
def matrix(config: RunConfig) -> None:
    with run_lifespan(config) as state:
        records = state.records
        with stage("select"):
            flags = detect(records, state.labels, config.thresholds.tau_low)
        with stage("generate"):
            report = build_matrix_report(
                records,
                state.labels,
                config.shannon_slices(),
                state.classifier,
                config.policy,
                state.sample_map,
                dataset=state.manifest.name,
                metadata=state.metadata(),
                flags=flags,
                class_names=state.manifest.class_names,
                error_previews=config.gallery_error_previews,
                workers=config.workers,
            )
        with stage("report"):
            images = {
                sample_id: state.sample_map[sample_id].image
                for sample_id in sorted(
                    {entry.sample_id for entry in report.flags.previews}
                    | {entry.sample_id for entry in report.error_previews}
                )
            }
            state.repo.write_text("matrix.json", render(report, "json"))
            state.repo.write_text("matrix.md", render(report, "markdown"))
            state.repo.write_text("gallery.html", render(report, "html-gallery", images))
        click.echo(render(report, "markdown"), nl=False)
        echo_summary(cells=len(report.cells), flagged=report.flags.count)
