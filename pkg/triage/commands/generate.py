import logging

import click

from triage.commands.common import echo_summary, with_config
from triage.core.errors import stage
from triage.core.lifespan import run_lifespan
from triage.core.selection import build_candidates, generate, minimisation
from triage.models.run import RunConfig

logger = logging.getLogger(__name__)


@click.command("generate", help="Transform high-entropy correct predictions and keep the ones that flip.")
@with_config("generate")
def generate_tests(config: RunConfig) -> None:
    with run_lifespan(config) as state:
        records = state.records
        with stage("select"):
            candidates = build_candidates(records, state.labels, config.thresholds.tau_high)
        with stage("generate"):
            errors = generate(
                candidates,
                config.policy,
                state.classifier,
                state.sample_map,
                workers=config.workers,
            )
        state.repo.write_errors(errors.entries)
        state.repo.write_json(
            "summary.json",
            {
                "dataset": state.manifest.name,
                "classifier": state.classifier.describe(),
                "tau_high": config.thresholds.tau_high,
                "seed": config.policy.seed,
                "kinds": [kind.value for kind in config.policy.kinds],
                "attempts": errors.attempts,
                "errors": len(errors),
                "error_ratio": errors.error_ratio,
                "minimisation": minimisation(len(records), candidates).model_dump(),
            },
        )
        ratio = "n/a" if errors.error_ratio is None else f"{errors.error_ratio:.4f}"
        echo_summary(candidates=len(candidates), errors=len(errors), error_ratio=ratio)
