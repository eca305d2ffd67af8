"""Reliability and accuracy statistics for panels of ordinal ratings.

Covers everything the study harness reports: multi-rater chance-corrected
agreement (plain, linearly weighted, per category), quadratic-weighted
kappa between two label sources, percentile-bootstrap confidence
intervals, reference-standard construction (majority vote, max severity,
leave-one-out), confusion matrices, and the accuracy metric battery.

Every headline rate is carried as an exact integer numerator/denominator
(:class:`Rate`) next to its float, so downstream tables can show "250/467
(53.5%)" without re-deriving counts from rounded percentages.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import Severity

CATEGORIES = tuple(Severity)


class UndefinedEstimateError(ValueError):
    """The estimator has no defined value on this input (degenerate chance)."""


class CIFailureError(RuntimeError):
    """Bootstrap could not assemble enough defined resamples."""


class Excluded(Enum):
    """Marker label for items dropped from a reference standard (ties)."""

    EXCLUDED = "excluded"

    def __repr__(self):
        return "EXCLUDED"


EXCLUDED = Excluded.EXCLUDED


@dataclass(frozen=True, order=True)
class Rate:
    """An exact count fraction with its conventional percent rendering."""

    numerator: int
    denominator: int

    def __post_init__(self):
        if self.denominator <= 0:
            raise ValueError("rate denominator must be positive")
        if not 0 <= self.numerator <= self.denominator:
            raise ValueError(f"rate {self.numerator}/{self.denominator} out of range")

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    @property
    def value(self) -> float:
        return self.numerator / self.denominator

    def __str__(self):
        return f"{self.numerator}/{self.denominator} ({100 * self.value:.1f}%)"


# --- rating matrices ---------------------------------------------------------


class RatingMatrix:
    """items x raters grid of ordinal labels; cells may be absent.

    Multi-rater kappa needs every included item to carry the same number
    of ratings, so :meth:`complete_table` drops (and reports) items with
    fewer ratings than the fullest one.
    """

    def __init__(self):
        self._cells: dict[str, dict[str, Severity]] = {}

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, Severity]]) -> "RatingMatrix":
        m = cls()
        for item_id, rater_id, label in rows:
            m.add(item_id, rater_id, label)
        return m

    def add(self, item_id: str, rater_id: str, label: Severity) -> None:
        ratings = self._cells.setdefault(item_id, {})
        if rater_id in ratings:
            raise ValueError(f"duplicate rating for item {item_id} by {rater_id}")
        ratings[rater_id] = Severity.from_value(label)

    def item_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._cells))

    def rater_ids(self) -> tuple[str, ...]:
        return tuple(sorted({r for ratings in self._cells.values() for r in ratings}))

    def ratings_for(self, item_id: str) -> Mapping[str, Severity]:
        return MappingProxyType(self._cells.get(item_id, {}))

    def __len__(self):
        return len(self._cells)

    def take(self, item_ids: Sequence[str]) -> "RatingMatrix":
        """New matrix over ``item_ids`` (repeats allowed, items renamed)."""
        m = RatingMatrix()
        for k, item_id in enumerate(item_ids):
            m._cells[f"b{k}"] = dict(self._cells[item_id])
        return m

    def complete_table(self) -> tuple[tuple[str, ...], np.ndarray, tuple[str, ...]]:
        """(included ids, items x 4 category counts, dropped ids).

        n is the largest per-item rating count; items below it are dropped.
        """
        if not self._cells:
            return (), np.zeros((0, 4)), ()
        n = max(len(r) for r in self._cells.values())
        included, dropped, rows = [], [], []
        for item_id in self.item_ids():
            ratings = self._cells[item_id]
            if len(ratings) != n:
                dropped.append(item_id)
                continue
            row = [0, 0, 0, 0]
            for label in ratings.values():
                row[int(label)] += 1
            included.append(item_id)
            rows.append(row)
        return tuple(included), np.array(rows, dtype=float), tuple(dropped)


def _checked_table(m: RatingMatrix) -> np.ndarray:
    _ids, counts, _dropped = m.complete_table()
    if counts.shape[0] == 0:
        raise UndefinedEstimateError("no items with a complete rating panel")
    n = int(counts[0].sum())
    if n < 2:
        raise UndefinedEstimateError("kappa needs at least 2 ratings per item")
    return counts


def fleiss_kappa(m: RatingMatrix) -> float:
    """Multi-rater chance-corrected exact agreement over the 4 categories."""
    counts = _checked_table(m)
    big_n, n = counts.shape[0], counts[0].sum()
    p_i = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (big_n * n)
    p_e = float((p_j * p_j).sum())
    if p_e >= 1.0:
        raise UndefinedEstimateError("single category everywhere: chance agreement is 1")
    return float((p_bar - p_e) / (1 - p_e))


def linear_weights() -> np.ndarray:
    idx = np.arange(4)
    return 1 - np.abs(idx[:, None] - idx[None, :]) / 3


def quadratic_weights() -> np.ndarray:
    idx = np.arange(4)
    return 1 - (idx[:, None] - idx[None, :]) ** 2 / 9


def fleiss_kappa_weighted(m: RatingMatrix, weights: np.ndarray | None = None) -> float:
    """Ordinal-weighted generalization; near-miss disagreements count partially."""
    w = linear_weights() if weights is None else np.asarray(weights, dtype=float)
    counts = _checked_table(m)
    big_n, n = counts.shape[0], counts[0].sum()
    p_i = (np.einsum("ij,jk,ik->i", counts, w, counts) - n) / (n * (n - 1))
    p_bar = p_i.mean()
    p_j = counts.sum(axis=0) / (big_n * n)
    p_e = float(p_j @ w @ p_j)
    if p_e >= 1.0:
        raise UndefinedEstimateError("degenerate weighted chance agreement")
    return float((p_bar - p_e) / (1 - p_e))


def per_category_kappa(m: RatingMatrix) -> dict[Severity, float | None]:
    """Category-specific agreement; None for absent or universal categories."""
    counts = _checked_table(m)
    big_n, n = counts.shape[0], counts[0].sum()
    out: dict[Severity, float | None] = {}
    for j, category in enumerate(CATEGORIES):
        col = counts[:, j]
        total = col.sum()
        if total == 0 or total == big_n * n:
            out[category] = None
            continue
        p = total / (big_n * n)
        out[category] = float(1 - (col * (n - col)).sum() / (big_n * n * (n - 1) * p * (1 - p)))
    return out


# --- confusion matrices ------------------------------------------------------


@dataclass(frozen=True)
class ConfusionMatrix4:
    """4x4 counts, rows = predicted severity code, columns = reference code.

    Internal indexing follows the 0..3 ordinal codes. The text grid format
    (see :meth:`from_grid_text`) lists most-severe-first instead, which is
    how such tables are conventionally printed.
    """

    counts: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if len(self.counts) != 4 or any(len(row) != 4 for row in self.counts):
            raise ValueError("confusion matrix must be 4x4")
        if any(c < 0 or c != int(c) for row in self.counts for c in row):
            raise ValueError("confusion counts must be non-negative integers")
        object.__setattr__(
            self, "counts", tuple(tuple(int(c) for c in row) for row in self.counts)
        )

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_totals(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.counts)

    def col_totals(self) -> tuple[int, ...]:
        return tuple(sum(row[j] for row in self.counts) for j in range(4))

    def transpose(self) -> "ConfusionMatrix4":
        return ConfusionMatrix4(tuple(zip(*self.counts)))

    def __add__(self, other: "ConfusionMatrix4") -> "ConfusionMatrix4":
        return ConfusionMatrix4(
            tuple(
                tuple(a + b for a, b in zip(row_a, row_b))
                for row_a, row_b in zip(self.counts, other.counts)
            )
        )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Severity, Severity]]) -> "ConfusionMatrix4":
        grid = [[0] * 4 for _ in range(4)]
        for pred, ref in pairs:
            grid[int(pred)][int(ref)] += 1
        return cls(tuple(tuple(row) for row in grid))

    @classmethod
    def from_grid_text(cls, text: str) -> "ConfusionMatrix4":
        """Parse the text layout: 4 rows x 4 ints, most severe first."""
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([int(tok) for tok in line.split()])
        if len(rows) != 4 or any(len(r) != 4 for r in rows):
            raise ValueError("grid must contain exactly 4 rows of 4 integers")
        grid = [[0] * 4 for _ in range(4)]
        for r in range(4):
            for c in range(4):
                grid[3 - r][3 - c] = rows[r][c]
        return cls(tuple(tuple(row) for row in grid))

    def to_grid_text(self) -> str:
        lines = ["# rows: predicted severity (most severe first); columns: reference"]
        for r in (3, 2, 1, 0):
            lines.append(" ".join(str(self.counts[r][c]) for c in (3, 2, 1, 0)))
        return "\n".join(lines) + "\n"


def quadratic_weighted_kappa(c: ConfusionMatrix4) -> float:
    """Chance-corrected agreement with quadratic ordinal penalties."""
    observed = np.array(c.counts, dtype=float)
    total = observed.sum()
    if total == 0:
        raise UndefinedEstimateError("empty confusion matrix")
    rows, cols = observed.sum(axis=1), observed.sum(axis=0)
    if (rows > 0).sum() < 2 or (cols > 0).sum() < 2:
        raise UndefinedEstimateError("degenerate marginal: one side uses a single category")
    w = quadratic_weights()
    p_o = float((w * observed).sum() / total)
    p_e = float((w * np.outer(rows, cols)).sum() / total**2)
    return float((p_o - p_e) / (1 - p_e))


def confusion(pred: Mapping[str, Severity], ref: "ReferenceStandard") -> ConfusionMatrix4:
    """Counts over the reference's non-excluded items."""
    missing = sorted(
        item for item, label in ref.labels.items()
        if label is not EXCLUDED and item not in pred
    )
    if missing:
        raise ValueError(f"missing predictions for {len(missing)} items: {missing[:10]}")
    pairs = [
        (pred[item], label)
        for item, label in ref.labels.items()
        if label is not EXCLUDED
    ]
    return ConfusionMatrix4.from_pairs(pairs)


# --- metric batteries --------------------------------------------------------


@dataclass(frozen=True)
class Metrics4:
    accuracy: Rate
    within_one: Rate
    overtriage: Rate
    undertriage: Rate
    recall: Mapping[Severity, Rate | None]
    precision: Mapping[Severity, Rate | None]

    def __post_init__(self):
        object.__setattr__(self, "recall", MappingProxyType(dict(self.recall)))
        object.__setattr__(self, "precision", MappingProxyType(dict(self.precision)))


def metrics4(c: ConfusionMatrix4) -> Metrics4:
    total = c.total
    if total == 0:
        raise ValueError("empty confusion matrix")
    exact = sum(c.counts[i][i] for i in range(4))
    near = sum(c.counts[i][j] for i in range(4) for j in range(4) if abs(i - j) <= 1)
    over = sum(c.counts[i][j] for i in range(4) for j in range(4) if i > j)
    under = sum(c.counts[i][j] for i in range(4) for j in range(4) if i < j)
    cols, rows = c.col_totals(), c.row_totals()
    recall = {
        s: Rate(c.counts[int(s)][int(s)], cols[int(s)]) if cols[int(s)] else None
        for s in CATEGORIES
    }
    precision = {
        s: Rate(c.counts[int(s)][int(s)], rows[int(s)]) if rows[int(s)] else None
        for s in CATEGORIES
    }
    return Metrics4(
        accuracy=Rate(exact, total),
        within_one=Rate(near, total),
        overtriage=Rate(over, total),
        undertriage=Rate(under, total),
        recall=recall,
        precision=precision,
    )


@dataclass(frozen=True)
class BinaryMetrics:
    """Actionable (URGENT/EMERGENCY) vs not, collapsed from the 4x4 counts."""

    tp: int
    fp: int
    fn: int
    tn: int
    sensitivity: Rate | None
    specificity: Rate | None
    ppv: Rate | None
    npv: Rate | None
    fpr: Rate | None
    fnr: Rate | None
    accuracy: Rate


def binary_metrics(c: ConfusionMatrix4) -> BinaryMetrics:
    if c.total == 0:
        raise ValueError("empty confusion matrix")
    tp = fp = fn = tn = 0
    for i in range(4):
        for j in range(4):
            pred_hot, ref_hot = i >= 2, j >= 2
            n = c.counts[i][j]
            if pred_hot and ref_hot:
                tp += n
            elif pred_hot:
                fp += n
            elif ref_hot:
                fn += n
            else:
                tn += n

    def rate(num, den):
        return Rate(num, den) if den else None

    return BinaryMetrics(
        tp=tp, fp=fp, fn=fn, tn=tn,
        sensitivity=rate(tp, tp + fn),
        specificity=rate(tn, tn + fp),
        ppv=rate(tp, tp + fp),
        npv=rate(tn, tn + fn),
        fpr=rate(fp, fp + tn),
        fnr=rate(fn, fn + tp),
        accuracy=Rate(tp + tn, c.total),
    )


# --- reference standards -----------------------------------------------------


@dataclass(frozen=True)
class ReferenceStandard:
    """Per-item consensus labels; EXCLUDED items never enter accuracy metrics."""

    provenance: str
    labels: Mapping[str, Severity | Excluded]

    def __post_init__(self):
        object.__setattr__(self, "labels", MappingProxyType(dict(self.labels)))

    def evaluable(self) -> dict[str, Severity]:
        return {i: s for i, s in self.labels.items() if s is not EXCLUDED}

    def excluded_ids(self) -> tuple[str, ...]:
        return tuple(sorted(i for i, s in self.labels.items() if s is EXCLUDED))

    def excluded_fraction(self) -> Rate:
        return Rate(len(self.excluded_ids()), len(self.labels))


def majority_vote(labels: Sequence[Severity]) -> Severity | Excluded:
    """Strict-majority label, or EXCLUDED when no label clears half."""
    if not labels:
        raise ValueError("majority_vote needs at least one label")
    top, count = Counter(labels).most_common(1)[0]
    return top if count * 2 > len(labels) else EXCLUDED


def max_severity_reference(labels: Sequence[Severity]) -> Severity:
    if not labels:
        raise ValueError("max_severity_reference needs at least one label")
    return max(labels)


def majority_reference(m: RatingMatrix) -> ReferenceStandard:
    labels = {
        item: majority_vote(list(m.ratings_for(item).values()))
        for item in m.item_ids()
    }
    return ReferenceStandard("majority", labels)


def max_reference(m: RatingMatrix) -> ReferenceStandard:
    labels = {
        item: max_severity_reference(list(m.ratings_for(item).values()))
        for item in m.item_ids()
    }
    return ReferenceStandard("max_severity", labels)


def loo_reference(
    assignments: Mapping[str, Sequence[str]],
    ratings: RatingMatrix,
    left_out: str,
) -> ReferenceStandard:
    """Two-remaining-reviewer consensus over the items ``left_out`` rated.

    Never consults the left-out rater's own labels.
    """
    labels: dict[str, Severity | Excluded] = {}
    for item, panel in assignments.items():
        if left_out not in panel:
            continue
        remaining = [r for r in panel if r != left_out]
        if len(remaining) != 2:
            raise ValueError(f"item {item}: expected 2 remaining raters, got {len(remaining)}")
        got = ratings.ratings_for(item)
        try:
            a, b = (got[r] for r in remaining)
        except KeyError as exc:
            raise ValueError(f"item {item}: no rating from {exc.args[0]}") from None
        labels[item] = a if a == b else EXCLUDED
    return ReferenceStandard(f"loo:{left_out}", labels)


# --- bootstrap ---------------------------------------------------------------


@dataclass(frozen=True)
class KappaEstimate:
    point: float
    ci_low: float
    ci_high: float
    method: str
    resamples: int
    seed: int
    redrawn: int = 0

    def __post_init__(self):
        if self.method not in ("fleiss", "fleiss_linear_weighted", "cohen_quadratic"):
            raise ValueError(f"unknown kappa method {self.method!r}")
        if not (self.ci_low - 1e-9 <= self.point <= self.ci_high + 1e-9):
            raise ValueError(
                f"point {self.point} outside percentile interval "
                f"[{self.ci_low}, {self.ci_high}]"
            )


@dataclass(frozen=True)
class BootstrapCI:
    low: float
    high: float
    resamples: int
    redrawn: int
    seed: int


def _bootstrap_loop(
    n_items: int,
    evaluate: Callable[[np.ndarray], float],
    resamples: int,
    seed: int,
) -> tuple[list[float], int]:
    """Percentile-bootstrap engine with redraw-on-undefined.

    Each draw gets its own RNG stream keyed by (seed, attempt index), so
    results do not depend on evaluation order or parallel scheduling.
    """
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if n_items < 1:
        raise UndefinedEstimateError("nothing to resample")
    values: list[float] = []
    undefined = 0
    attempt = 0
    cap = 10 * resamples
    while len(values) < resamples:
        if undefined * 2 > resamples or attempt >= cap:
            raise CIFailureError(
                f"estimator undefined on {undefined} of {attempt} bootstrap draws"
            )
        rng = np.random.default_rng([seed, attempt])
        attempt += 1
        picks = rng.integers(0, n_items, size=n_items)
        try:
            values.append(evaluate(picks))
        except UndefinedEstimateError:
            undefined += 1
    return values, undefined


def bootstrap_ci(
    estimator: Callable[[RatingMatrix], float],
    m: RatingMatrix,
    resamples: int = 2000,
    seed: int = 0,
) -> BootstrapCI:
    """2.5/97.5 percentile interval under item-level resampling."""
    ids = m.item_ids()

    def evaluate(picks: np.ndarray) -> float:
        return estimator(m.take([ids[k] for k in picks]))

    values, undefined = _bootstrap_loop(len(ids), evaluate, resamples, seed)
    low, high = np.percentile(values, [2.5, 97.5])
    return BootstrapCI(float(low), float(high), resamples, undefined, seed)


_KAPPA_ESTIMATORS: Mapping[str, Callable[[RatingMatrix], float]] = MappingProxyType({
    "fleiss": fleiss_kappa,
    "fleiss_linear_weighted": fleiss_kappa_weighted,
})


def kappa_with_ci(
    m: RatingMatrix,
    method: str = "fleiss",
    resamples: int = 2000,
    seed: int = 0,
) -> KappaEstimate:
    estimator = _KAPPA_ESTIMATORS[method]
    point = estimator(m)
    ci = bootstrap_ci(estimator, m, resamples=resamples, seed=seed)
    return KappaEstimate(point, ci.low, ci.high, method, resamples, seed, ci.redrawn)


def qwk_with_ci(
    pairs: Sequence[tuple[Severity, Severity]],
    resamples: int = 2000,
    seed: int = 0,
) -> KappaEstimate:
    """Quadratic-weighted kappa over (predicted, reference) pairs, with CI."""
    pairs = list(pairs)
    point = quadratic_weighted_kappa(ConfusionMatrix4.from_pairs(pairs))

    def evaluate(picks: np.ndarray) -> float:
        resampled = [pairs[k] for k in picks]
        return quadratic_weighted_kappa(ConfusionMatrix4.from_pairs(resampled))

    values, undefined = _bootstrap_loop(len(pairs), evaluate, resamples, seed)
    low, high = np.percentile(values, [2.5, 97.5])
    return KappaEstimate(
        point, float(low), float(high), "cohen_quadratic", resamples, seed, undefined
    )


# --- pairwise agreement ------------------------------------------------------


def pairwise_agreement(m: RatingMatrix) -> dict[str, dict[str, Rate | None]]:
    """Exact-match fraction per rater pair over co-rated items.

    Symmetric; the diagonal is each rater's trivial self-agreement; pairs
    with no co-rated items are None.
    """
    raters = m.rater_ids()
    rated: dict[str, dict[str, Severity]] = {r: {} for r in raters}
    for item in m.item_ids():
        for rater, label in m.ratings_for(item).items():
            rated[rater][item] = label
    out: dict[str, dict[str, Rate | None]] = {a: {} for a in raters}
    for a in raters:
        for b in raters:
            shared = rated[a].keys() & rated[b].keys()
            if not shared:
                out[a][b] = None
                continue
            matches = sum(1 for item in shared if rated[a][item] == rated[b][item])
            out[a][b] = Rate(matches, len(shared))
    return out


# --- ratings file format -----------------------------------------------------
#
# CSV with header: item_id,rater_id,severity,duration_s,presentation_index
# severity is the integer code (names also accepted on ingest); duration may
# be empty. presentation_index is 0 for a first showing, >0 for the repeats
# used in intra-rater consistency checks.

RATINGS_FIELDS = ("item_id", "rater_id", "severity", "duration_s", "presentation_index")


@dataclass(frozen=True)
class RatingRow:
    item_id: str
    rater_id: str
    severity: Severity
    duration_s: float | None = None
    presentation_index: int = 0


def write_ratings_csv(path: str | Path, rows: Iterable[RatingRow]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_FIELDS)
        for row in rows:
            writer.writerow([
                row.item_id,
                row.rater_id,
                int(row.severity),
                "" if row.duration_s is None else row.duration_s,
                row.presentation_index,
            ])
            count += 1
    return count


def read_ratings_csv(path: str | Path) -> list[RatingRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or set(RATINGS_FIELDS) - set(reader.fieldnames):
            raise ValueError(f"{path}: expected header {','.join(RATINGS_FIELDS)}")
        for line_no, rec in enumerate(reader, 2):
            try:
                rows.append(RatingRow(
                    item_id=rec["item_id"],
                    rater_id=rec["rater_id"],
                    severity=Severity.from_value(rec["severity"]),
                    duration_s=float(rec["duration_s"]) if rec["duration_s"] else None,
                    presentation_index=int(rec["presentation_index"] or 0),
                ))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{line_no}: bad rating row: {exc}") from exc
    return rows


def matrix_from_rows(rows: Iterable[RatingRow], presentation_index: int = 0) -> RatingMatrix:
    """First-presentation ratings as a matrix (repeats are for other checks)."""
    m = RatingMatrix()
    for row in rows:
        if row.presentation_index == presentation_index:
            m.add(row.item_id, row.rater_id, row.severity)
    return m
