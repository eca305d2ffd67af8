"""Study orchestration.

Five evaluations over a graded sample set, each returning a frozen section
object that the report renderer turns into one table:

- repeatability: the same rater grades every case several times and we
  measure how often it agrees with itself (run_irr);
- alert-rate comparison between the fixed rules, the adaptive rules, and
  any other registered rater (run_baseline_comparison);
- validation of one rater against a reviewer panel's majority vote
  (run_validation);
- leave-one-out scoring, where each reviewer and the rater are measured
  against the remaining two reviewers' consensus (run_loo);
- adjudication of the rater's severe overtriage calls (select_severe_
  overtriage / classify_adjudication) and reviewer self-consistency on
  repeated anchors (intra_rater_consistency).

Trials fan out per (case, run) when a worker pool is requested; raters are
keyed on (seed, case id, run index), so parallel and serial execution give
identical results and aggregation stays a plain single-threaded reduce.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping, Sequence

from .agreement import (
    CIFailureError,
    ConfusionMatrix4,
    BinaryMetrics,
    KappaEstimate,
    Metrics4,
    Rate,
    RatingMatrix,
    RatingRow,
    ReferenceStandard,
    UndefinedEstimateError,
    binary_metrics,
    confusion,
    fleiss_kappa,
    fleiss_kappa_weighted,
    kappa_with_ci,
    loo_reference,
    majority_reference,
    max_reference,
    metrics4,
    per_category_kappa,
    qwk_with_ci,
)
from .core import DeviceKind, Severity
from .raters import Rater, RaterCase, RaterResult, RaterVerdict, is_failure, rate

CATEGORIES = (
    Severity.NOT_AN_ISSUE,
    Severity.MONITOR,
    Severity.URGENT,
    Severity.EMERGENCY,
)


def run_trials(
    rater: Rater,
    cases: Sequence[RaterCase],
    runs: int,
    workers: int = 0,
) -> dict[str, list[RaterResult]]:
    """Grade every case ``runs`` times; results keyed by case id, run order."""
    if runs < 1:
        raise ValueError("runs must be at least 1")
    jobs = [(case, k) for case in cases for k in range(runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: rate(rater, job[0], job[1]), jobs))
    else:
        results = [rate(rater, case, k) for case, k in jobs]
    out: dict[str, list[RaterResult]] = {case.case_id: [] for case in cases}
    for (case, _), result in zip(jobs, results):
        out[case.case_id].append(result)
    return out


# --- repeatability -----------------------------------------------------------


@dataclass(frozen=True)
class DeviceIrr:
    device: DeviceKind
    n_items: int
    kappa: float | None
    perfect_rate: Rate


@dataclass(frozen=True)
class IrrSection:
    rater_id: str
    runs: int
    n_items: int
    excluded_items: Mapping[str, int]  # case id -> failed trial count
    kappa: KappaEstimate | None
    weighted_kappa: float | None
    per_category: Mapping[Severity, float | None]
    perfect_rate: Rate
    per_device: tuple[DeviceIrr, ...]
    notes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "excluded_items", MappingProxyType(dict(self.excluded_items))
        )
        object.__setattr__(
            self, "per_category", MappingProxyType(dict(self.per_category))
        )


def _perfect(table: Mapping[str, Sequence[Severity]], ids: Sequence[str]) -> Rate:
    hits = sum(1 for i in ids if len(set(table[i])) == 1)
    return Rate(hits, len(ids))


def run_irr(
    rater: Rater,
    cases: Sequence[RaterCase],
    runs: int = 5,
    seed: int = 0,
    resamples: int = 2000,
    workers: int = 0,
) -> IrrSection:
    """Self-agreement of one rater across repeated independent runs."""
    if runs < 2:
        raise ValueError("self-agreement needs at least 2 runs per case")
    if not cases:
        raise ValueError("no cases to grade")
    by_case = run_trials(rater, cases, runs, workers=workers)
    devices = {case.case_id: case.reading.device for case in cases}

    excluded: dict[str, int] = {}
    graded: dict[str, list[Severity]] = {}
    for case_id in sorted(by_case):
        results = by_case[case_id]
        failures = sum(1 for r in results if is_failure(r))
        if failures:
            excluded[case_id] = failures
        else:
            graded[case_id] = [r.severity for r in results]
    if not graded:
        raise ValueError("every case had a failed trial; nothing to score")

    matrix = RatingMatrix()
    for case_id, labels in graded.items():
        for k, label in enumerate(labels):
            matrix.add(case_id, f"run{k}", label)

    notes: list[str] = []
    kappa: KappaEstimate | None = None
    try:
        kappa = kappa_with_ci(matrix, "fleiss", resamples=resamples, seed=seed)
    except UndefinedEstimateError:
        notes.append("kappa undefined: all gradings in one category")
    except CIFailureError:
        notes.append("kappa CI unavailable: bootstrap draws mostly degenerate")
    try:
        weighted = fleiss_kappa_weighted(matrix)
    except UndefinedEstimateError:
        weighted = None

    ids = sorted(graded)
    perfect = _perfect(graded, ids)
    if perfect.numerator == perfect.denominator:
        notes.append("deterministic rater")

    per_device = []
    for device in sorted(set(devices.values()), key=lambda d: d.value):
        device_ids = [i for i in ids if devices[i] == device]
        if not device_ids:
            continue
        try:
            device_kappa = fleiss_kappa(matrix.take(device_ids))
        except UndefinedEstimateError:
            device_kappa = None
        per_device.append(
            DeviceIrr(device, len(device_ids), device_kappa,
                      _perfect(graded, device_ids))
        )

    rater_id = getattr(rater, "rater_id", type(rater).__name__)
    return IrrSection(
        rater_id=rater_id,
        runs=runs,
        n_items=len(graded),
        excluded_items=excluded,
        kappa=kappa,
        weighted_kappa=weighted,
        per_category=per_category_kappa(matrix),
        perfect_rate=perfect,
        per_device=tuple(per_device),
        notes=tuple(notes),
    )


# --- alert-rate comparison ---------------------------------------------------


@dataclass(frozen=True)
class AlertRateRow:
    rater_id: str
    n: int
    by_severity: Mapping[Severity, Rate]
    actionable: Rate
    failures: int

    def __post_init__(self):
        object.__setattr__(
            self, "by_severity", MappingProxyType(dict(self.by_severity))
        )


@dataclass(frozen=True)
class BaselineComparisonSection:
    rows: tuple[AlertRateRow, ...]

    def row(self, rater_id: str) -> AlertRateRow:
        for row in self.rows:
            if row.rater_id == rater_id:
                return row
        raise KeyError(f"no alert-rate row for {rater_id}")


def alert_rates(rater: Rater, cases: Sequence[RaterCase]) -> AlertRateRow:
    counts = {s: 0 for s in CATEGORIES}
    failures = 0
    for case in cases:
        result = rate(rater, case, 0)
        if is_failure(result):
            failures += 1
        else:
            counts[result.severity] += 1
    n = len(cases) - failures
    if n == 0:
        raise ValueError("every trial failed; no severities to tally")
    rater_id = getattr(rater, "rater_id", type(rater).__name__)
    return AlertRateRow(
        rater_id=rater_id,
        n=n,
        by_severity={s: Rate(counts[s], n) for s in CATEGORIES},
        actionable=Rate(
            counts[Severity.URGENT] + counts[Severity.EMERGENCY], n
        ),
        failures=failures,
    )


def run_baseline_comparison(
    cases: Sequence[RaterCase],
    raters: Sequence[Rater],
) -> BaselineComparisonSection:
    """Severity distribution per rater over one pass of the same cases."""
    if not cases:
        raise ValueError("no cases to grade")
    if not raters:
        raise ValueError("no raters registered")
    return BaselineComparisonSection(
        rows=tuple(alert_rates(r, cases) for r in raters)
    )


# --- panel validation --------------------------------------------------------


@dataclass(frozen=True)
class ReferenceEval:
    reference: str
    n_evaluable: int
    excluded: tuple[str, ...]
    confusion: ConfusionMatrix4
    metrics: Metrics4
    binary: BinaryMetrics
    qwk: KappaEstimate | None
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class ValidationSection:
    rater_id: str
    majority: ReferenceEval
    max_severity: ReferenceEval


def _evaluate_against(
    predictions: Mapping[str, Severity],
    reference: ReferenceStandard,
    seed: int,
    resamples: int,
) -> ReferenceEval:
    matrix = confusion(predictions, reference)
    evaluable = reference.evaluable()
    pairs = [(predictions[i], label) for i, label in sorted(evaluable.items())]
    notes: list[str] = []
    qwk: KappaEstimate | None = None
    try:
        qwk = qwk_with_ci(pairs, resamples=resamples, seed=seed)
    except UndefinedEstimateError:
        notes.append("QWK undefined: a marginal collapsed to one category")
    except CIFailureError:
        notes.append("QWK CI unavailable: bootstrap draws mostly degenerate")
    return ReferenceEval(
        reference=reference.provenance,
        n_evaluable=len(evaluable),
        excluded=reference.excluded_ids(),
        confusion=matrix,
        metrics=metrics4(matrix),
        binary=binary_metrics(matrix),
        qwk=qwk,
        notes=tuple(notes),
    )


def run_validation(
    panel: RatingMatrix,
    verdicts: Mapping[str, Severity],
    rater_id: str,
    seed: int = 0,
    resamples: int = 2000,
) -> ValidationSection:
    """Score one rater's verdicts against the panel's consensus labels.

    The majority reference drops ties (the exclusions are reported); the
    max-severity variant keeps every item.
    """
    missing = sorted(set(panel.item_ids()) - set(verdicts))
    if missing:
        raise ValueError(f"missing verdicts for {len(missing)} items: {missing[:10]}")
    predictions = {i: verdicts[i] for i in panel.item_ids()}
    return ValidationSection(
        rater_id=rater_id,
        majority=_evaluate_against(
            predictions, majority_reference(panel), seed, resamples
        ),
        max_severity=_evaluate_against(
            predictions, max_reference(panel), seed + 1, resamples
        ),
    )


# --- leave-one-out -----------------------------------------------------------


@dataclass(frozen=True)
class LooRow:
    left_out: str  # reviewer whose items form the subset
    subject: str   # whose predictions this row scores
    n: int         # items where the two remaining reviewers agreed
    excluded: int  # partner-disagreement items dropped from the subset
    exact: Rate | None
    emergency_sensitivity: Rate | None
    actionable_sensitivity: Rate | None
    overtriage: Rate | None


@dataclass(frozen=True)
class LooSection:
    rater_id: str
    rows: tuple[LooRow, ...]
    pooled: LooRow


def _loo_row(
    left_out: str,
    subject: str,
    pairs: Sequence[tuple[Severity, Severity]],
    excluded: int,
) -> LooRow:
    if not pairs:
        return LooRow(left_out, subject, 0, excluded, None, None, None, None)
    matrix = ConfusionMatrix4.from_pairs(pairs)
    scores = metrics4(matrix)
    binary = binary_metrics(matrix)
    return LooRow(
        left_out=left_out,
        subject=subject,
        n=matrix.total,
        excluded=excluded,
        exact=scores.accuracy,
        emergency_sensitivity=scores.recall[Severity.EMERGENCY],
        actionable_sensitivity=binary.sensitivity,
        overtriage=scores.overtriage,
    )


def run_loo(
    panel: RatingMatrix,
    assignments: Mapping[str, Sequence[str]],
    verdicts: Mapping[str, Severity],
    rater_id: str,
) -> LooSection:
    """Score each reviewer, and the rater, against two-partner consensus.

    For every reviewer R, the reference over R's items is the agreement of
    the other two panelists; R's own labels never shape it. The rater is
    scored on each subset and once more on the pool of all subsets, where an
    item co-reviewed by several left-out reviewers is retained once per
    subset (the references differ).
    """
    reviewers = sorted({r for panel_ids in assignments.values() for r in panel_ids})
    rows: list[LooRow] = []
    pooled_pairs: list[tuple[Severity, Severity]] = []
    pooled_excluded = 0
    for reviewer in reviewers:
        reference = loo_reference(assignments, panel, reviewer)
        evaluable = reference.evaluable()
        excluded = len(reference.labels) - len(evaluable)
        own_pairs = []
        rater_pairs = []
        for item in sorted(evaluable):
            label = evaluable[item]
            own_pairs.append((panel.ratings_for(item)[reviewer], label))
            if item not in verdicts:
                raise ValueError(f"missing verdict for {item}")
            rater_pairs.append((verdicts[item], label))
        rows.append(_loo_row(reviewer, reviewer, own_pairs, excluded))
        rows.append(_loo_row(reviewer, rater_id, rater_pairs, excluded))
        pooled_pairs.extend(rater_pairs)
        pooled_excluded += excluded
    pooled = _loo_row("all", rater_id, pooled_pairs, pooled_excluded)
    if pooled.n != sum(r.n for r in rows if r.subject == rater_id and r.left_out != "all"):
        raise AssertionError("pooled row lost items")  # pragma: no cover
    return LooSection(rater_id=rater_id, rows=tuple(rows), pooled=pooled)


# --- overtriage adjudication -------------------------------------------------


class AdjudicationVerdict(Enum):
    JUSTIFIED = "justified"
    DEBATABLE = "debatable"
    TRUE_OVERTRIAGE = "true_overtriage"


@dataclass(frozen=True)
class AdjudicationCase:
    sample_id: str
    agent: Severity
    majority: Severity
    regrades: Mapping[str, Severity] = field(default_factory=dict)
    verdicts: Mapping[str, AdjudicationVerdict] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.agent) - int(self.majority) < 2:
            raise ValueError(
                f"{self.sample_id}: gap "
                f"{int(self.agent) - int(self.majority)} is below the "
                "2-level adjudication threshold"
            )
        object.__setattr__(self, "regrades", MappingProxyType(dict(self.regrades)))
        object.__setattr__(self, "verdicts", MappingProxyType(dict(self.verdicts)))

    @property
    def gap(self) -> int:
        return int(self.agent) - int(self.majority)


def select_severe_overtriage(
    verdicts: Mapping[str, Severity],
    reference: ReferenceStandard,
) -> tuple[AdjudicationCase, ...]:
    """Cases where the rater exceeded consensus by 2+ levels, worst first."""
    cases = []
    for item, label in reference.evaluable().items():
        if item not in verdicts:
            continue
        if int(verdicts[item]) - int(label) >= 2:
            cases.append(AdjudicationCase(item, verdicts[item], label))
    return tuple(sorted(cases, key=lambda c: (-c.gap, c.sample_id)))


def classify_adjudication(
    agent: Severity,
    majority: Severity,
    regrade: Severity,
) -> AdjudicationVerdict:
    """Place one re-grade of an overtriage call on the three-way scale.

    A regrade below the original majority still counts as TRUE_OVERTRIAGE:
    the adjudicator found even less cause for alarm than the panel did.
    """
    if agent <= majority:
        raise ValueError("only overtriage cases are adjudicated")
    if regrade >= agent:
        return AdjudicationVerdict.JUSTIFIED
    if regrade > majority:
        return AdjudicationVerdict.DEBATABLE
    return AdjudicationVerdict.TRUE_OVERTRIAGE


@dataclass(frozen=True)
class AdjudicationSection:
    cases: tuple[AdjudicationCase, ...]
    tally: Mapping[AdjudicationVerdict, Rate]

    def __post_init__(self):
        object.__setattr__(self, "tally", MappingProxyType(dict(self.tally)))


def run_adjudication(
    cases: Sequence[AdjudicationCase],
    regrades: Mapping[str, Mapping[str, Severity]],
) -> AdjudicationSection:
    """Apply adjudicator re-grades and tally the verdicts."""
    judged = []
    counts = {v: 0 for v in AdjudicationVerdict}
    total = 0
    for case in cases:
        try:
            case_regrades = dict(regrades[case.sample_id])
        except KeyError:
            raise ValueError(f"no regrade recorded for {case.sample_id}") from None
        if not case_regrades:
            raise ValueError(f"no regrade recorded for {case.sample_id}")
        verdicts = {
            who: classify_adjudication(case.agent, case.majority, regrade)
            for who, regrade in case_regrades.items()
        }
        for verdict in verdicts.values():
            counts[verdict] += 1
            total += 1
        judged.append(
            AdjudicationCase(
                case.sample_id, case.agent, case.majority,
                regrades=case_regrades, verdicts=verdicts,
            )
        )
    tally = (
        {v: Rate(counts[v], total) for v in AdjudicationVerdict} if total else {}
    )
    return AdjudicationSection(cases=tuple(judged), tally=tally)


# --- anchor self-consistency -------------------------------------------------


@dataclass(frozen=True)
class ConsistencyRow:
    rater_id: str
    consistent: Rate | None  # anchors graded identically every time, or None
    incomplete: tuple[str, ...]


@dataclass(frozen=True)
class ConsistencySection:
    presentations: int
    rows: tuple[ConsistencyRow, ...]


def intra_rater_consistency(
    rows: Sequence[RatingRow],
    anchors: Mapping[str, Sequence[str]],
    presentations: int = 5,
) -> ConsistencySection:
    """Fraction of each reviewer's anchors graded identically every time.

    Works from exported rating rows, whose presentation_index is 0 for the
    first showing. An anchor missing any of the ``presentations`` indices is
    excluded from the rate and listed as incomplete.
    """
    if presentations < 2:
        raise ValueError("consistency needs at least 2 presentations")
    grades: dict[tuple[str, str], dict[int, Severity]] = {}
    for row in rows:
        grades.setdefault((row.rater_id, row.item_id), {})[
            row.presentation_index
        ] = row.severity
    out = []
    wanted = set(range(presentations))
    for rater_id in sorted(anchors):
        consistent = 0
        complete = 0
        incomplete = []
        for anchor in sorted(anchors[rater_id]):
            seen = grades.get((rater_id, anchor), {})
            if set(seen) < wanted:
                incomplete.append(anchor)
                continue
            complete += 1
            if len({seen[k] for k in wanted}) == 1:
                consistent += 1
        rate_ = Rate(consistent, complete) if complete else None
        out.append(ConsistencyRow(rater_id, rate_, tuple(incomplete)))
    return ConsistencySection(presentations=presentations, rows=tuple(out))
