"""Study report assembly and rendering.

Thirteen numbered tables cover the whole evaluation: cohort makeup, reading
volume, rater self-agreement, alert rates, reviewer self-consistency, the
consensus label distribution, pairwise reviewer agreement, performance
against the consensus (headline, per-category, binary), head-to-head rater
accuracy, leave-one-out scoring, and overtriage adjudication.

Every rate cell is carried as an exact numerator/denominator pair all the
way to the output, and an internal-consistency audit re-sums each table's
components against its section N before anything renders. Rendering is a
pure function of the assembled sections, so identical inputs produce
byte-identical documents.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .agreement import (
    KappaEstimate,
    Rate,
    RatingMatrix,
    majority_reference,
    pairwise_agreement,
)
from .cohort import PatientProfile
from .core import DeviceKind, Reading, Severity
from .studies import (
    AdjudicationSection,
    AdjudicationVerdict,
    BaselineComparisonSection,
    ConsistencySection,
    IrrSection,
    LooSection,
    ValidationSection,
)

CellValue = object  # Rate | KappaEstimate | Severity | DeviceKind | int | float | str | None

CATEGORIES = (
    Severity.NOT_AN_ISSUE,
    Severity.MONITOR,
    Severity.URGENT,
    Severity.EMERGENCY,
)
SEVERE_FIRST = tuple(reversed(CATEGORIES))


class AuditError(RuntimeError):
    """At least one internal-consistency check failed."""


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass(frozen=True)
class Table:
    number: int
    title: str
    columns: tuple[str, ...]
    rows: tuple[tuple[CellValue, ...], ...]
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class StudyReport:
    title: str
    seed: int
    tables: tuple[Table, ...]
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> tuple[Check, ...]:
        return tuple(c for c in self.checks if not c.ok)

    def table(self, number: int) -> Table:
        for t in self.tables:
            if t.number == number:
                return t
        raise KeyError(f"no table {number}")

    def render(self, strict: bool = True) -> str:
        if strict and not self.ok:
            lines = "; ".join(f"{c.name}: {c.detail}" for c in self.failures())
            raise AuditError(f"internal consistency audit failed: {lines}")
        out = [self.title, f"seed: {self.seed}", ""]
        for table in self.tables:
            out.append(f"Table {table.number}. {table.title}")
            out.extend(_render_grid(table))
            for note in table.notes:
                out.append(f"  note: {note}")
            out.append("")
        passed = sum(1 for c in self.checks if c.ok)
        out.append(
            f"Internal consistency: {passed}/{len(self.checks)} checks passed."
        )
        for check in self.failures():
            out.append(f"  FAILED {check.name}: {check.detail}")
        return "\n".join(out) + "\n"

    def to_record(self) -> dict:
        return {
            "title": self.title,
            "seed": self.seed,
            "tables": [
                {
                    "number": t.number,
                    "title": t.title,
                    "columns": list(t.columns),
                    "rows": [[_json_cell(c) for c in row] for row in t.rows],
                    "notes": list(t.notes),
                }
                for t in self.tables
            ],
            "audit": [
                {"name": c.name, "ok": c.ok, "detail": c.detail}
                for c in self.checks
            ],
        }


def format_cell(value: CellValue) -> str:
    if value is None:
        return "-"
    if isinstance(value, Rate):
        return str(value)
    if isinstance(value, KappaEstimate):
        return (
            f"{value.point:.3f} "
            f"(95% CI {value.ci_low:.3f} to {value.ci_high:.3f})"
        )
    if isinstance(value, Severity):
        return value.name.lower()
    if isinstance(value, DeviceKind):
        return value.value
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def _json_cell(value: CellValue):
    if isinstance(value, Rate):
        return {"numerator": value.numerator, "denominator": value.denominator}
    if isinstance(value, KappaEstimate):
        return {
            "point": value.point,
            "ci_low": value.ci_low,
            "ci_high": value.ci_high,
            "resamples": value.resamples,
        }
    if isinstance(value, (Severity, DeviceKind)):  # IntEnum / str-Enum
        return format_cell(value)
    if value is None or isinstance(value, (int, float, str)):
        return value
    return format_cell(value)


def _render_grid(table: Table) -> list[str]:
    rendered = [tuple(table.columns)]
    rendered += [tuple(format_cell(c) for c in row) for row in table.rows]
    widths = [
        max(len(row[i]) for row in rendered) for i in range(len(table.columns))
    ]
    lines = []
    for row in rendered:
        lines.append(
            "  " + "  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
        )
    return lines


def _placeholder(number: int, title: str) -> Table:
    return Table(number, title, ("status",), (("not computed",),))


# --- assembly ----------------------------------------------------------------


def _demographics_table(cohort: Sequence[PatientProfile], checks: list[Check]) -> Table:
    n = len(cohort)
    if n == 0:
        return _placeholder(1, "Cohort demographics")
    ages = [p.age_years for p in cohort]
    age_sd = statistics.stdev(ages) if n > 1 else 0.0
    female = sum(1 for p in cohort if p.sex == "female")
    conditions = sorted({c for p in cohort for c in p.flags.conditions})
    rows: list[tuple[CellValue, ...]] = [
        ("patients", n),
        ("age, mean (SD)", f"{statistics.mean(ages):.1f} ({age_sd:.1f})"),
        ("age range", f"{min(ages):.1f} to {max(ages):.1f}"),
        ("female", Rate(female, n)),
    ]
    ok = True
    for name in conditions:
        count = sum(1 for p in cohort if name in p.flags.conditions)
        ok = ok and 0 <= count <= n
        rows.append((name.replace("_", " "), Rate(count, n)))
    checks.append(Check(
        "demographics_counts_within_cohort", ok and female <= n,
        f"{n} patients",
    ))
    return Table(1, "Cohort demographics", ("characteristic", "value"), tuple(rows))


def _volume_table(readings: Sequence[Reading], checks: list[Check]) -> Table:
    n = len(readings)
    if n == 0:
        return _placeholder(2, "Reading volume by device")
    counts = {kind: 0 for kind in DeviceKind}
    for reading in readings:
        counts[reading.device] += 1
    rows = [
        (kind, Rate(counts[kind], n))
        for kind in sorted(DeviceKind, key=lambda k: k.value)
    ]
    rows.append(("total", n))
    checks.append(Check(
        "volume_devices_partition_readings",
        sum(counts.values()) == n,
        f"{sum(counts.values())} == {n}",
    ))
    patients = len({r.patient_id for r in readings})
    return Table(
        2, "Reading volume by device", ("device", "readings"), tuple(rows),
        notes=(f"{patients} patients contributed readings",),
    )


def _irr_table(section: IrrSection | None, checks: list[Check]) -> Table:
    if section is None:
        return _placeholder(3, "Rater self-agreement across repeated runs")
    rows: list[tuple[CellValue, ...]] = [
        ("rater", section.rater_id),
        ("runs per case", section.runs),
        ("cases graded", section.n_items),
        ("cases excluded for failed trials", len(section.excluded_items)),
        ("agreement kappa", section.kappa),
        ("distance-weighted kappa", section.weighted_kappa),
        (f"perfect {section.runs}/{section.runs} rate", section.perfect_rate),
    ]
    for level in CATEGORIES:
        rows.append((f"kappa, {format_cell(level)}", section.per_category[level]))
    device_total = 0
    perfect_sum = 0
    for device in section.per_device:
        device_total += device.n_items
        perfect_sum += device.perfect_rate.numerator
        rows.append((f"{device.device.value}: cases", device.n_items))
        rows.append((f"{device.device.value}: kappa", device.kappa))
        rows.append((f"{device.device.value}: perfect rate", device.perfect_rate))
    checks.append(Check(
        "irr_device_rows_partition_cases",
        device_total == section.n_items
        and perfect_sum == section.perfect_rate.numerator
        and section.perfect_rate.denominator == section.n_items,
        f"{device_total} == {section.n_items}",
    ))
    return Table(
        3, "Rater self-agreement across repeated runs",
        ("measure", "value"), tuple(rows), notes=section.notes,
    )


def _alert_table(section: BaselineComparisonSection | None, checks: list[Check]) -> Table:
    if section is None:
        return _placeholder(4, "Alert rates by rater")
    rows = []
    ok = True
    for row in section.rows:
        severity_sum = sum(r.numerator for r in row.by_severity.values())
        actionable = (
            row.by_severity[Severity.URGENT].numerator
            + row.by_severity[Severity.EMERGENCY].numerator
        )
        ok = ok and severity_sum == row.n and actionable == row.actionable.numerator
        rows.append((
            row.rater_id,
            row.n,
            *(row.by_severity[level] for level in CATEGORIES),
            row.actionable,
            row.failures,
        ))
    checks.append(Check("alert_rows_sum_to_n", ok))
    return Table(
        4, "Alert rates by rater",
        ("rater", "n", "not an issue", "monitor", "urgent", "emergency",
         "actionable", "failed trials"),
        tuple(rows),
    )


def _consistency_table(
    section: ConsistencySection | None,
    expected_anchors: int | None,
    checks: list[Check],
) -> Table:
    if section is None:
        return _placeholder(5, "Reviewer self-consistency on repeated anchors")
    rows = []
    ok = True
    for row in section.rows:
        complete = row.consistent.denominator if row.consistent else 0
        if expected_anchors is not None:
            ok = ok and complete + len(row.incomplete) == expected_anchors
        rows.append((row.rater_id, row.consistent, len(row.incomplete)))
    checks.append(Check(
        "consistency_anchors_accounted",
        ok,
        "complete + incomplete == assigned anchors",
    ))
    return Table(
        5, "Reviewer self-consistency on repeated anchors",
        ("reviewer", "anchors graded identically", "incomplete anchors"),
        tuple(rows),
        notes=(f"{section.presentations} presentations per anchor",),
    )


def _consensus_table(panel: RatingMatrix | None, checks: list[Check]) -> Table:
    if panel is None or len(panel) == 0:
        return _placeholder(6, "Consensus label distribution")
    reference = majority_reference(panel)
    evaluable = reference.evaluable()
    counts = {level: 0 for level in CATEGORIES}
    for label in evaluable.values():
        counts[label] += 1
    n = len(reference.labels)
    rows: list[tuple[CellValue, ...]] = [
        (level, Rate(counts[level], n)) for level in SEVERE_FIRST
    ]
    excluded = len(reference.excluded_ids())
    rows.append(("no majority (excluded)", Rate(excluded, n)))
    checks.append(Check(
        "consensus_labels_partition_samples",
        sum(counts.values()) + excluded == n,
        f"{sum(counts.values())} + {excluded} == {n}",
    ))
    return Table(
        6, "Consensus label distribution",
        ("majority label", "samples"), tuple(rows),
    )


def _pairwise_table(panel: RatingMatrix | None, checks: list[Check]) -> Table:
    if panel is None or len(panel) == 0:
        return _placeholder(7, "Pairwise reviewer agreement")
    table = pairwise_agreement(panel)
    reviewers = sorted(table)
    ok = True
    rows = []
    for a in reviewers:
        cells: list[CellValue] = [a]
        for b in reviewers:
            if a == b:
                cells.append(None)
                continue
            ok = ok and table[a][b] == table[b][a]
            cells.append(table[a][b])
        rows.append(tuple(cells))
    checks.append(Check("pairwise_agreement_symmetric", ok))
    return Table(
        7, "Pairwise reviewer agreement (exact match)",
        ("reviewer", *reviewers), tuple(rows),
    )


def _validation_tables(
    section: ValidationSection | None, checks: list[Check]
) -> tuple[Table, Table, Table]:
    if section is None:
        return (
            _placeholder(8, "Performance against the majority consensus"),
            _placeholder(9, "Per-level recall and precision"),
            _placeholder(10, "Actionable-versus-not summary"),
        )
    against = section.majority
    m = against.metrics
    rows8: list[tuple[CellValue, ...]] = [
        ("rater", section.rater_id),
        ("evaluable samples", against.n_evaluable),
        ("excluded (no majority)", len(against.excluded)),
        ("exact accuracy", m.accuracy),
        ("within one level", m.within_one),
        ("overtriage", m.overtriage),
        ("undertriage", m.undertriage),
        ("quadratic-weighted kappa", against.qwk),
        ("exact accuracy vs max-severity reference",
         section.max_severity.metrics.accuracy),
    ]
    for pred in SEVERE_FIRST:
        rows8.append((
            f"predicted {format_cell(pred)}",
            *(Rate(against.confusion.counts[int(pred)][int(ref)],
                   against.confusion.total)
              for ref in SEVERE_FIRST),
        ))
    checks.append(Check(
        "validation_confusion_sums_to_n",
        against.confusion.total == against.n_evaluable
        and m.accuracy.denominator == against.n_evaluable,
        f"{against.confusion.total} == {against.n_evaluable}",
    ))

    rows9 = [
        (level, m.recall[level], m.precision[level]) for level in SEVERE_FIRST
    ]
    col_sum = sum(against.confusion.col_totals())
    checks.append(Check(
        "per_level_columns_sum_to_n",
        col_sum == against.n_evaluable,
        f"{col_sum} == {against.n_evaluable}",
    ))

    b = against.binary
    rows10: list[tuple[CellValue, ...]] = [
        ("true positives", b.tp),
        ("false positives", b.fp),
        ("false negatives", b.fn),
        ("true negatives", b.tn),
        ("sensitivity", b.sensitivity),
        ("specificity", b.specificity),
        ("positive predictive value", b.ppv),
        ("negative predictive value", b.npv),
        ("false positive rate", b.fpr),
        ("false negative rate", b.fnr),
        ("accuracy", b.accuracy),
    ]
    checks.append(Check(
        "binary_cells_sum_to_n",
        b.tp + b.fp + b.fn + b.tn == against.n_evaluable,
        f"{b.tp}+{b.fp}+{b.fn}+{b.tn} == {against.n_evaluable}",
    ))
    notes8 = tuple(against.notes) + (
        "confusion rows are predicted level; columns are the consensus "
        "(most severe first)",
    )
    return (
        Table(8, "Performance against the majority consensus",
              ("measure", "value", "", "", ""), tuple(_pad(rows8, 5)),
              notes=notes8),
        Table(9, "Per-level recall and precision",
              ("level", "recall", "precision"), tuple(rows9)),
        Table(10, "Actionable-versus-not summary",
              ("measure", "value"), tuple(rows10)),
    )


def _pad(rows: Sequence[tuple], width: int) -> list[tuple]:
    return [tuple(row) + ("",) * (width - len(row)) for row in rows]


def _head_to_head_table(
    sections: Sequence[ValidationSection], checks: list[Check]
) -> Table:
    if not sections:
        return _placeholder(11, "Head-to-head accuracy against the same consensus")
    rows = []
    ns = {s.majority.n_evaluable for s in sections}
    for section in sections:
        m = section.majority.metrics
        rows.append((
            section.rater_id,
            section.majority.n_evaluable,
            m.accuracy,
            m.within_one,
            m.overtriage,
            m.undertriage,
            section.majority.qwk,
        ))
    checks.append(Check(
        "head_to_head_shares_reference",
        len(ns) == 1,
        f"evaluable Ns: {sorted(ns)}",
    ))
    return Table(
        11, "Head-to-head accuracy against the same consensus",
        ("rater", "n", "exact", "within one", "overtriage", "undertriage",
         "qwk"),
        tuple(rows),
    )


def _loo_table(section: LooSection | None, checks: list[Check]) -> Table:
    if section is None:
        return _placeholder(12, "Leave-one-out comparison")
    rows = []
    agent_total = 0
    ok = True
    for row in section.rows:
        if row.subject == section.rater_id:
            agent_total += row.n
        if row.exact is not None:
            ok = ok and row.exact.denominator == row.n
        rows.append((
            row.left_out, row.subject, row.n, row.excluded, row.exact,
            row.emergency_sensitivity, row.actionable_sensitivity,
            row.overtriage,
        ))
    pooled = section.pooled
    rows.append((
        "all (pooled)", pooled.subject, pooled.n, pooled.excluded,
        pooled.exact, pooled.emergency_sensitivity,
        pooled.actionable_sensitivity, pooled.overtriage,
    ))
    checks.append(Check(
        "loo_pooled_n_is_sum_of_subsets",
        ok and pooled.n == agent_total,
        f"{pooled.n} == {agent_total}",
    ))
    return Table(
        12, "Leave-one-out comparison",
        ("subset (left out)", "scored", "n", "excluded", "exact",
         "emergency sens.", "actionable sens.", "overtriage"),
        tuple(rows),
        notes=(
            "the pooled row keeps one entry per subset appearance, so its "
            "overtriage rate is computed on the pooled set",
        ),
    )


def _adjudication_table(
    section: AdjudicationSection | None, checks: list[Check]
) -> Table:
    if section is None:
        return _placeholder(13, "Adjudication of severe overtriage")
    rows: list[tuple[CellValue, ...]] = [
        ("cases selected (gap of 2 or more)", len(section.cases)),
    ]
    verdict_count = 0
    for verdict in AdjudicationVerdict:
        if verdict in section.tally:
            rows.append((verdict.value.replace("_", " "), section.tally[verdict]))
    for case in section.cases:
        for who in sorted(case.verdicts):
            verdict_count += 1
            rows.append((
                f"{case.sample_id}: agent {format_cell(case.agent)}, "
                f"consensus {format_cell(case.majority)}, {who} regraded "
                f"{format_cell(case.regrades[who])}",
                case.verdicts[who].value.replace("_", " "),
            ))
    tally_total = sum(r.numerator for r in section.tally.values())
    denominators = {r.denominator for r in section.tally.values()}
    checks.append(Check(
        "adjudication_tally_sums_to_verdicts",
        tally_total == verdict_count and denominators <= {verdict_count},
        f"{tally_total} == {verdict_count}",
    ))
    return Table(
        13, "Adjudication of severe overtriage",
        ("item", "value"), tuple(rows),
    )


def build_report(
    *,
    seed: int,
    title: str = "Remote monitoring triage study",
    cohort: Sequence[PatientProfile] = (),
    readings: Sequence[Reading] = (),
    irr: IrrSection | None = None,
    alert_rates: BaselineComparisonSection | None = None,
    consistency: ConsistencySection | None = None,
    expected_anchors: int | None = None,
    panel: RatingMatrix | None = None,
    validation: ValidationSection | None = None,
    head_to_head: Sequence[ValidationSection] = (),
    loo: LooSection | None = None,
    adjudication: AdjudicationSection | None = None,
) -> StudyReport:
    """Assemble the thirteen study tables and run every consistency audit."""
    checks: list[Check] = []
    t8, t9, t10 = _validation_tables(validation, checks)
    tables = (
        _demographics_table(cohort, checks),
        _volume_table(readings, checks),
        _irr_table(irr, checks),
        _alert_table(alert_rates, checks),
        _consistency_table(consistency, expected_anchors, checks),
        _consensus_table(panel, checks),
        _pairwise_table(panel, checks),
        t8,
        t9,
        t10,
        _head_to_head_table(head_to_head, checks),
        _loo_table(loo, checks),
        _adjudication_table(adjudication, checks),
    )
    ordered = tuple(sorted(tables, key=lambda t: t.number))
    return StudyReport(title=title, seed=seed, tables=ordered, checks=tuple(checks))


def write_report(report: StudyReport, directory: str | Path, strict: bool = True) -> Path:
    """Write the text document plus one JSON file per table; returns the dir."""
    base = Path(directory)
    base.mkdir(parents=True, exist_ok=True)
    text = report.render(strict=strict)
    (base / "report.txt").write_text(text, encoding="utf-8")
    record = report.to_record()
    for table in record["tables"]:
        path = base / f"table_{table['number']:02d}.json"
        path.write_text(
            json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    (base / "audit.json").write_text(
        json.dumps(record["audit"], indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return base
