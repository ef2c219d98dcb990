import logging

import click

from triage.commands.common import echo_summary, with_config
from triage.core.entropy import entropy_summary, max_entropy
from triage.core.lifespan import run_lifespan
from triage.models.run import RunConfig

logger = logging.getLogger(__name__)


@click.command("scan", help="Predict every sample once and record its Shannon index.")
@with_config("scan")
def scan(config: RunConfig) -> None:
    with run_lifespan(config) as state:
        records = state.records
        state.repo.write_records(records, state.labels)
        correct = sum(1 for r in records if r.predicted_label == state.labels[r.sample_id])
        thresholds = config.thresholds
        state.repo.write_json(
            "summary.json",
            {
                "dataset": state.manifest.name,
                "splits": config.splits,
                "classifier": state.classifier.describe(),
                "class_count": state.manifest.class_count,
                "max_entropy": max_entropy(state.manifest.class_count),
                "accuracy": correct / len(records),
                "entropy": entropy_summary(records, thresholds.tau_low, thresholds.tau_high),
            },
        )
        echo_summary(samples=len(records), accuracy=f"{correct / len(records):.4f}")
