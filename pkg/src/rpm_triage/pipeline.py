"""Desk-scale study pipeline.

Wires the simulator, the rule baselines, a mock reviewer panel and a mock
agent into the full report: simulate a cohort, draw the sample set, assign
reviewers, collect panel gradings (anchors re-presented per the plan),
grade everything with the registered raters, then run every study section
and assemble the thirteen tables.

The mock panel's latent labels come from the stricter of the two rule
baselines per case, so the panel behaves like clinicians who broadly agree
with a defensible reading of each case while still disagreeing at the
margins set by their noise kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .agreement import RatingMatrix, RatingRow, majority_reference
from .assignment import AssignmentPlan, build_assignment
from .cohort import SimConfig, SimDataset, generate_dataset
from .core import Severity
from .raters import (
    AdaptiveBaselineRater,
    FixedBaselineRater,
    MockRater,
    NoiseKernel,
    RaterCase,
    make_cases,
    rate,
)
from .report import StudyReport, build_report
from .studies import (
    intra_rater_consistency,
    run_adjudication,
    run_baseline_comparison,
    run_irr,
    run_loo,
    run_validation,
    select_severe_overtriage,
)

_REVIEWER_STREAM = 71
_AGENT_STREAM = 72
_ADJUDICATOR_STREAM = 73
_SAMPLING_STREAM = 74

# Mostly-faithful agent with a small two-level spill, so severe-overtriage
# adjudication has material to work on.
AGENT_KERNEL = NoiseKernel((
    (0.88, 0.07, 0.04, 0.01),
    (0.05, 0.85, 0.07, 0.03),
    (0.02, 0.06, 0.87, 0.05),
    (0.01, 0.03, 0.08, 0.88),
))


def _derive_seed(seed: int, stream: int, index: int = 0) -> int:
    return int(np.random.default_rng([seed, stream, index]).integers(2**63))


@dataclass(frozen=True)
class DeskStudyConfig:
    seed: int = 0
    sim: SimConfig | None = None
    reviewer_count: int = 6
    per_sample: int = 3
    sample_count: int | None = None  # None grades every simulated reading
    anchors_per_reviewer: int = 20
    presentations: int = 5
    irr_runs: int = 5
    irr_cases: int = 100
    reviewer_diagonal: float = 0.90
    adjudicator_diagonal: float = 0.95
    resamples: int = 500
    workers: int = 0

    def sim_config(self) -> SimConfig:
        return self.sim if self.sim is not None else SimConfig(seed=self.seed)


@dataclass(frozen=True)
class DeskStudy:
    config: DeskStudyConfig
    dataset: SimDataset
    plan: AssignmentPlan
    cases: Mapping[str, RaterCase]
    panel: RatingMatrix
    rating_rows: tuple[RatingRow, ...]
    agent_verdicts: Mapping[str, Severity]
    report: StudyReport


def _latent_labels(cases: Sequence[RaterCase]) -> dict[str, Severity]:
    fixed = FixedBaselineRater()
    adaptive = AdaptiveBaselineRater()
    return {
        case.case_id: max(
            rate(fixed, case).severity, rate(adaptive, case).severity
        )
        for case in cases
    }


def _panel_gradings(
    plan: AssignmentPlan,
    cases: Mapping[str, RaterCase],
    reviewers: Mapping[str, MockRater],
) -> tuple[RatingMatrix, tuple[RatingRow, ...]]:
    """Walk every reviewer queue in order, as the live study would."""
    matrix = RatingMatrix()
    rows = []
    for reviewer_id in plan.reviewer_ids:
        rater = reviewers[reviewer_id]
        for item in plan.queues[reviewer_id]:
            verdict = rater.rate(
                cases[item.sample_id], run_index=item.presentation_index - 1
            )
            rows.append(RatingRow(
                item_id=item.sample_id,
                rater_id=reviewer_id,
                severity=verdict.severity,
                duration_s=verdict.duration_s,
                presentation_index=item.presentation_index - 1,
            ))
            if item.presentation_index == 1:
                matrix.add(item.sample_id, reviewer_id, verdict.severity)
    return matrix, tuple(rows)


def run_desk_study(config: DeskStudyConfig) -> DeskStudy:
    dataset = generate_dataset(config.sim_config())
    all_cases = make_cases(dataset.readings, store=dataset.store)
    if config.sample_count is not None and config.sample_count < len(all_cases):
        rng = np.random.default_rng([config.seed, _SAMPLING_STREAM])
        picks = rng.choice(len(all_cases), size=config.sample_count, replace=False)
        sampled = [all_cases[i] for i in sorted(picks)]
    else:
        sampled = list(all_cases)
    cases = {case.case_id: case for case in sampled}

    plan = build_assignment(
        samples=[case.case_id for case in sampled],
        reviewers=config.reviewer_count,
        per_sample=config.per_sample,
        anchors_per_reviewer=config.anchors_per_reviewer,
        presentations=config.presentations,
        seed=config.seed,
    )

    latent = _latent_labels(sampled)
    reviewer_kernel = NoiseKernel.near_diagonal(config.reviewer_diagonal)
    reviewers = {
        reviewer_id: MockRater(
            reviewer_kernel, latent,
            seed=_derive_seed(config.seed, _REVIEWER_STREAM, k),
            rater_id=reviewer_id,
        )
        for k, reviewer_id in enumerate(plan.reviewer_ids)
    }
    panel, rating_rows = _panel_gradings(plan, cases, reviewers)

    agent = MockRater(
        AGENT_KERNEL, latent,
        seed=_derive_seed(config.seed, _AGENT_STREAM),
        rater_id="mock_agent",
    )
    agent_verdicts = {
        case.case_id: rate(agent, case).severity for case in sampled
    }

    fixed = FixedBaselineRater()
    adaptive = AdaptiveBaselineRater()
    fixed_verdicts = {c.case_id: rate(fixed, c).severity for c in sampled}
    adaptive_verdicts = {c.case_id: rate(adaptive, c).severity for c in sampled}

    irr_cases = sampled[: config.irr_cases] if config.irr_cases else sampled
    irr = run_irr(
        agent, irr_cases, runs=config.irr_runs, seed=config.seed,
        resamples=config.resamples, workers=config.workers,
    )
    alert_rates = run_baseline_comparison(sampled, [fixed, adaptive, agent])
    consistency = intra_rater_consistency(
        rating_rows, plan.anchors, presentations=config.presentations
    )
    validations = {
        rater_id: run_validation(
            panel, verdicts, rater_id,
            seed=config.seed, resamples=config.resamples,
        )
        for rater_id, verdicts in (
            ("mock_agent", agent_verdicts),
            ("fixed_baseline", fixed_verdicts),
            ("adaptive_baseline", adaptive_verdicts),
        )
    }
    loo = run_loo(panel, plan.panels, agent_verdicts, "mock_agent")

    overtriage_cases = select_severe_overtriage(
        agent_verdicts, majority_reference(panel)
    )
    adjudicator = MockRater(
        NoiseKernel.near_diagonal(config.adjudicator_diagonal), latent,
        seed=_derive_seed(config.seed, _ADJUDICATOR_STREAM),
        rater_id="adjudicator",
    )
    regrades = {
        case.sample_id: {
            "adjudicator": adjudicator.rate(
                cases[case.sample_id], run_index=config.presentations
            ).severity
        }
        for case in overtriage_cases
    }
    adjudication = run_adjudication(overtriage_cases, regrades)

    report = build_report(
        seed=config.seed,
        cohort=dataset.cohort,
        readings=dataset.readings,
        irr=irr,
        alert_rates=alert_rates,
        consistency=consistency,
        expected_anchors=config.anchors_per_reviewer,
        panel=panel,
        validation=validations["mock_agent"],
        head_to_head=tuple(validations.values()),
        loo=loo,
        adjudication=adjudication,
    )
    return DeskStudy(
        config=config,
        dataset=dataset,
        plan=plan,
        cases=cases,
        panel=panel,
        rating_rows=rating_rows,
        agent_verdicts=agent_verdicts,
        report=report,
    )
