"""Command line workbench over the triage package.

Subcommands cover the whole workflow: simulate a cohort, grade readings
with a rule baseline, run the agreement studies on exported artifacts,
assemble the full report, and serve the blinded review queue.

File formats are the package's own: readings and rater logs are JSONL,
panel ratings are the five-column CSV, assignment plans and regrades are
JSON documents.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .agreement import (
    ReferenceStandard,
    majority_reference,
    matrix_from_rows,
    read_ratings_csv,
    write_ratings_csv,
)
from .assignment import AssignmentPlan
from .cohort import (
    SimConfig,
    generate_dataset,
    read_context_store,
    write_cohort,
    write_context_store,
    write_scenarios,
)
from .core import Severity, read_readings, write_readings
from .pipeline import DeskStudyConfig, run_desk_study
from .raters import (
    AdaptiveBaselineRater,
    FixedBaselineRater,
    Rater,
    RaterLogEntry,
    is_failure,
    make_cases,
    rate,
    read_rater_log,
    write_rater_log,
)
from .report import AuditError, format_cell, write_report
from .service import ReviewStore, create_app
from .studies import (
    run_adjudication,
    run_baseline_comparison,
    run_irr,
    run_loo,
    run_validation,
    select_severe_overtriage,
)

_RATERS = {
    "fixed": FixedBaselineRater,
    "adaptive": AdaptiveBaselineRater,
}


def _build_rater(name: str) -> Rater:
    return _RATERS[name]()


def _load_cases(readings_path: str, context_path: str | None):
    readings = read_readings(readings_path)
    store = read_context_store(context_path) if context_path else None
    return make_cases(readings, store=store)


def _verdict_map(log_path: str) -> dict[str, Severity]:
    """First-run verdict per case from a rater log."""
    verdicts: dict[str, Severity] = {}
    for entry in read_rater_log(log_path):
        if entry.outcome == "verdict" and entry.run_index == 0:
            verdicts[entry.case_id] = Severity.from_value(entry.severity)
    if not verdicts:
        raise click.ClickException(f"{log_path}: no first-run verdicts")
    return verdicts


def _load_plan(plan_path: str) -> AssignmentPlan:
    with open(plan_path, encoding="utf-8") as fh:
        return AssignmentPlan.from_record(json.load(fh))


def _print_table(headers: tuple, rows: list[tuple]) -> None:
    grid = [tuple(format_cell(c) for c in row) for row in [headers, *rows]]
    widths = [max(len(r[i]) for r in grid) for i in range(len(headers))]
    for row in grid:
        click.echo(
            "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        )


@click.group()
@click.version_option(__version__, prog_name="rpm-triage")
def main() -> None:
    """Remote patient monitoring triage workbench."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--patients", type=int, default=340, show_default=True)
@click.option("--readings", "reading_count", type=int, default=500,
              show_default=True)
@click.option("--span-days", type=int, default=60, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Simulation config JSON; overrides the flags.")
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
def simulate(seed, patients, reading_count, span_days, config_path, out_dir):
    """Generate a synthetic cohort with readings and clinical context."""
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            config = SimConfig.from_record(json.load(fh))
    else:
        config = SimConfig(
            seed=seed,
            patient_count=patients,
            reading_count=reading_count,
            span_days=span_days,
        )
    dataset = generate_dataset(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_readings(out / "readings.jsonl", dataset.readings)
    write_cohort(out / "cohort.jsonl", dataset.cohort)
    write_context_store(out / "context.json", dataset.store)
    write_scenarios(out / "scenarios.json", dataset.scenarios)
    (out / "sim_config.json").write_text(
        json.dumps(config.to_record(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    click.echo(
        f"wrote {len(dataset.readings)} readings for {len(dataset.cohort)} "
        f"patients ({len(dataset.scenarios)} injected scenarios) to {out}"
    )


@main.command()
@click.option("--readings", "readings_path", type=click.Path(exists=True),
              required=True)
@click.option("--context", "context_path", type=click.Path(exists=True),
              default=None)
@click.option("--rater", type=click.Choice(sorted(_RATERS)), default="fixed",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write per-reading verdicts as a rater log (JSONL).")
def triage(readings_path, context_path, rater, out_path):
    """Grade every reading in a file with one rule baseline."""
    cases = _load_cases(readings_path, context_path)
    chosen = _build_rater(rater)
    entries = []
    tally = {s: 0 for s in Severity}
    for case in cases:
        result = rate(chosen, case)
        entries.append(RaterLogEntry.from_result(case.case_id, 0, result))
        if not is_failure(result):
            tally[result.severity] += 1
    if out_path:
        write_rater_log(out_path, entries)
    total = len(cases)
    for severity in Severity:
        click.echo(
            f"{severity.name.lower():>12}  {tally[severity]}/{total}"
        )
    if out_path:
        click.echo(f"log written to {out_path}")


@main.command()
@click.option("--readings", "readings_path", type=click.Path(exists=True),
              required=True)
@click.option("--context", "context_path", type=click.Path(exists=True),
              default=None)
@click.option("--rater", type=click.Choice(sorted(_RATERS)), default="fixed",
              show_default=True)
@click.option("--runs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resamples", type=int, default=2000, show_default=True)
@click.option("--workers", type=int, default=0, show_default=True)
@click.option("--limit", type=int, default=None,
              help="Grade only the first N readings.")
def irr(readings_path, context_path, rater, runs, seed, resamples, workers,
        limit):
    """Self-agreement of one rater across repeated runs."""
    cases = _load_cases(readings_path, context_path)
    if limit is not None:
        cases = cases[:limit]
    section = run_irr(
        _build_rater(rater), cases, runs=runs, seed=seed,
        resamples=resamples, workers=workers,
    )
    click.echo(f"rater:         {section.rater_id}")
    click.echo(f"items x runs:  {section.n_items} x {section.runs}")
    click.echo(f"kappa:         {format_cell(section.kappa)}")
    click.echo(f"weighted:      {format_cell(section.weighted_kappa)}")
    click.echo(f"perfect runs:  {section.perfect_rate}")
    for note in section.notes:
        click.echo(f"note: {note}")


@main.command()
@click.option("--readings", "readings_path", type=click.Path(exists=True),
              required=True)
@click.option("--context", "context_path", type=click.Path(exists=True),
              default=None)
def compare(readings_path, context_path):
    """Alert-rate comparison of the two rule baselines."""
    cases = _load_cases(readings_path, context_path)
    section = run_baseline_comparison(
        cases, [FixedBaselineRater(), AdaptiveBaselineRater()]
    )
    headers = ("rater", "n", *(s.name.lower() for s in Severity), "actionable")
    rows = [
        (row.rater_id, row.n, *(row.by_severity[s] for s in Severity),
         row.actionable)
        for row in section.rows
    ]
    _print_table(headers, rows)


def _echo_reference_eval(evaluation) -> None:
    click.echo(f"reference:      {evaluation.reference}")
    click.echo(
        f"evaluable:      {evaluation.n_evaluable} "
        f"({len(evaluation.excluded)} excluded)"
    )
    click.echo(f"accuracy:       {evaluation.metrics.accuracy}")
    click.echo(f"within one:     {evaluation.metrics.within_one}")
    click.echo(f"overtriage:     {evaluation.metrics.overtriage}")
    click.echo(f"undertriage:    {evaluation.metrics.undertriage}")
    click.echo(f"sensitivity:    {format_cell(evaluation.binary.sensitivity)}")
    click.echo(f"specificity:    {format_cell(evaluation.binary.specificity)}")
    click.echo(f"qwk:            {format_cell(evaluation.qwk)}")
    for note in evaluation.notes:
        click.echo(f"note: {note}")


@main.command()
@click.option("--ratings", "ratings_path", type=click.Path(exists=True),
              required=True, help="Panel ratings CSV.")
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True),
              required=True, help="Rater log with the verdicts to score.")
@click.option("--rater-id", default="agent", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resamples", type=int, default=2000, show_default=True)
def validate(ratings_path, verdicts_path, rater_id, seed, resamples):
    """Score rater verdicts against the panel's consensus labels."""
    panel = matrix_from_rows(read_ratings_csv(ratings_path))
    verdicts = _verdict_map(verdicts_path)
    try:
        section = run_validation(
            panel, verdicts, rater_id, seed=seed, resamples=resamples
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"rater: {section.rater_id}")
    click.echo("-- against the majority vote --")
    _echo_reference_eval(section.majority)
    click.echo("-- against the most severe label --")
    _echo_reference_eval(section.max_severity)


@main.command()
@click.option("--ratings", "ratings_path", type=click.Path(exists=True),
              required=True, help="Panel ratings CSV.")
@click.option("--plan", "plan_path", type=click.Path(exists=True),
              required=True, help="Assignment plan JSON.")
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True),
              required=True, help="Rater log with the verdicts to score.")
@click.option("--rater-id", default="agent", show_default=True)
def loo(ratings_path, plan_path, verdicts_path, rater_id):
    """Leave-one-out comparison of every reviewer against the rater."""
    panel = matrix_from_rows(read_ratings_csv(ratings_path))
    plan = _load_plan(plan_path)
    verdicts = _verdict_map(verdicts_path)
    try:
        section = run_loo(panel, plan.panels, verdicts, rater_id)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    headers = (
        "left out", "subject", "n", "excluded", "exact",
        "emergency sens", "actionable sens", "overtriage",
    )
    rows = [
        (row.left_out, row.subject, row.n, row.excluded, row.exact,
         row.emergency_sensitivity, row.actionable_sensitivity,
         row.overtriage)
        for row in [*section.rows, section.pooled]
    ]
    _print_table(headers, rows)


@main.command()
@click.option("--ratings", "ratings_path", type=click.Path(exists=True),
              required=True, help="Panel ratings CSV.")
@click.option("--verdicts", "verdicts_path", type=click.Path(exists=True),
              required=True, help="Rater log with the verdicts to score.")
@click.option("--regrades", "regrades_path", type=click.Path(exists=True),
              required=True,
              help='JSON {sample_id: {adjudicator_id: severity}}.')
def adjudicate(ratings_path, verdicts_path, regrades_path):
    """Adjudicate the rater's severe overtriage calls."""
    panel = matrix_from_rows(read_ratings_csv(ratings_path))
    verdicts = _verdict_map(verdicts_path)
    with open(regrades_path, encoding="utf-8") as fh:
        raw = json.load(fh)
    regrades = {
        sample_id: {
            adjudicator: Severity.from_value(severity)
            for adjudicator, severity in graded.items()
        }
        for sample_id, graded in raw.items()
    }
    reference: ReferenceStandard = majority_reference(panel)
    cases = select_severe_overtriage(verdicts, reference)
    if not cases:
        click.echo("no severe overtriage cases to adjudicate")
        return
    try:
        section = run_adjudication(cases, regrades)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    for verdict, share in section.tally.items():
        click.echo(f"{verdict.value:>16}  {share}")
    headers = ("sample", "agent", "majority", "gap")
    rows = [
        (case.sample_id, case.agent, case.majority, case.gap)
        for case in section.cases
    ]
    _print_table(headers, rows)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--sim-config", "sim_config_path", type=click.Path(exists=True),
              default=None, help="Simulation config JSON for the cohort.")
@click.option("--samples", type=int, default=None,
              help="Grade only this many readings (default: all).")
@click.option("--reviewers", type=int, default=6, show_default=True)
@click.option("--per-sample", type=int, default=3, show_default=True)
@click.option("--anchors", type=int, default=20, show_default=True)
@click.option("--presentations", type=int, default=5, show_default=True)
@click.option("--irr-runs", type=int, default=5, show_default=True)
@click.option("--irr-cases", type=int, default=100, show_default=True)
@click.option("--resamples", type=int, default=500, show_default=True)
@click.option("--workers", type=int, default=0, show_default=True)
def report(seed, out_dir, sim_config_path, samples, reviewers, per_sample,
           anchors, presentations, irr_runs, irr_cases, resamples, workers):
    """Run the full desk-scale study and write the report bundle.

    Exits nonzero when any internal-consistency audit fails.
    """
    sim = None
    if sim_config_path:
        with open(sim_config_path, encoding="utf-8") as fh:
            sim = SimConfig.from_record(json.load(fh))
    config = DeskStudyConfig(
        seed=seed,
        sim=sim,
        reviewer_count=reviewers,
        per_sample=per_sample,
        sample_count=samples,
        anchors_per_reviewer=anchors,
        presentations=presentations,
        irr_runs=irr_runs,
        irr_cases=irr_cases,
        resamples=resamples,
        workers=workers,
    )
    try:
        study = run_desk_study(config)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_readings(out / "readings.jsonl", study.dataset.readings)
    write_context_store(out / "context.json", study.dataset.store)
    write_ratings_csv(out / "ratings.csv", study.rating_rows)
    (out / "plan.json").write_text(
        json.dumps(study.plan.to_record(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    write_rater_log(out / "agent_verdicts.jsonl", [
        RaterLogEntry(
            case_id=case_id,
            run_index=0,
            rater_id="mock_agent",
            outcome="verdict",
            severity=int(severity),
            action=None,
            rationale=None,
            duration_s=0.0,
        )
        for case_id, severity in sorted(study.agent_verdicts.items())
    ])
    try:
        path = write_report(study.report, out, strict=True)
    except AuditError as exc:
        click.echo(f"audit failed: {exc}", err=True)
        sys.exit(2)
    passed = sum(1 for c in study.report.checks if c.ok)
    click.echo(f"report written to {path}")
    click.echo(f"audits: {passed}/{len(study.report.checks)} checks passed")


def build_service(
    plan_path: str,
    readings_path: str,
    context_path: str | None = None,
    wal_path: str | None = None,
    ui_dir: str | None = None,
    token_salt: str = "review-service",
):
    """Assemble the review store and app from study artifacts."""
    plan = _load_plan(plan_path)
    store = read_context_store(context_path) if context_path else None
    cases = {
        case.case_id: case
        for case in make_cases(read_readings(readings_path), store=store)
    }
    needed = {sid: cases[sid] for sid in plan.sample_ids if sid in cases}
    review_store = ReviewStore(
        plan,
        needed,
        context=store,
        wal_path=wal_path,
        token_salt=token_salt,
    )
    app = create_app(
        review_store,
        stub_rater=FixedBaselineRater(),
        ui_dir=ui_dir,
    )
    return app, review_store


@main.command()
@click.option("--plan", "plan_path", type=click.Path(exists=True),
              required=True, help="Assignment plan JSON.")
@click.option("--readings", "readings_path", type=click.Path(exists=True),
              required=True)
@click.option("--context", "context_path", type=click.Path(exists=True),
              default=None)
@click.option("--wal", "wal_path", type=click.Path(), default=None,
              help="Grade write-ahead log; grades survive restarts.")
@click.option("--ui-dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Static UI bundle to serve at the root.")
@click.option("--token-salt", default="review-service", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--print-tokens", is_flag=True,
              help="Print reviewer and export tokens before serving.")
def serve(plan_path, readings_path, context_path, wal_path, ui_dir,
          token_salt, host, port, print_tokens):
    """Serve the blinded review queue."""
    import uvicorn

    app, store = build_service(
        plan_path, readings_path, context_path=context_path,
        wal_path=wal_path, ui_dir=ui_dir, token_salt=token_salt,
    )
    if print_tokens:
        for reviewer_id, token in store.tokens.items():
            click.echo(f"{reviewer_id}: {token}")
        click.echo(f"export: {store.export_token}")
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        store.close()


if __name__ == "__main__":
    main()
