"""Agreement statistics against exact-rational oracles and known tables."""

import random
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpm_triage.agreement import (
    EXCLUDED,
    BinaryMetrics,
    CIFailureError,
    ConfusionMatrix4,
    KappaEstimate,
    Rate,
    RatingMatrix,
    RatingRow,
    UndefinedEstimateError,
    binary_metrics,
    bootstrap_ci,
    confusion,
    fleiss_kappa,
    fleiss_kappa_weighted,
    kappa_with_ci,
    loo_reference,
    majority_reference,
    majority_vote,
    matrix_from_rows,
    max_reference,
    max_severity_reference,
    metrics4,
    pairwise_agreement,
    per_category_kappa,
    quadratic_weighted_kappa,
    qwk_with_ci,
    read_ratings_csv,
    write_ratings_csv,
)
from rpm_triage.core import Severity

from oracles import (
    fleiss_oracle,
    per_category_kappa_oracle,
    qwk_oracle,
    weighted_fleiss_oracle,
)

NI, MON, URG, EMG = Severity


def matrix_of(items):
    """items: list of per-item label lists; raters named r0, r1, ..."""
    m = RatingMatrix()
    for i, labels in enumerate(items):
        for r, label in enumerate(labels):
            m.add(f"s{i:03d}", f"r{r}", label)
    return m


def table_of(items):
    """The same items as category-count rows for the oracles."""
    table = []
    for labels in items:
        row = [0, 0, 0, 0]
        for label in labels:
            row[int(label)] += 1
        table.append(row)
    return table


def load_fixture(name):
    text = resources.files("rpm_triage").joinpath(f"data/{name}").read_text()
    return ConfusionMatrix4.from_grid_text(text)


FIXED_GRID = "confusion_fixed_vs_majority.txt"
ADAPTIVE_GRID = "confusion_adaptive_vs_majority.txt"


# --- Rate ---------------------------------------------------------------------


def test_rate_rendering_and_bounds():
    assert str(Rate(250, 467)) == "250/467 (53.5%)"
    assert Rate(1, 2).fraction == Fraction(1, 2)
    with pytest.raises(ValueError):
        Rate(3, 0)
    with pytest.raises(ValueError):
        Rate(5, 4)


# --- rating matrix ------------------------------------------------------------


def test_matrix_rejects_duplicate_cells():
    m = RatingMatrix()
    m.add("a", "r1", URG)
    with pytest.raises(ValueError):
        m.add("a", "r1", URG)


def test_complete_table_drops_short_items():
    m = matrix_of([[NI, NI, NI], [URG, URG, URG]])
    m.add("partial", "r0", MON)
    ids, counts, dropped = m.complete_table()
    assert ids == ("s000", "s001")
    assert dropped == ("partial",)
    assert counts.shape == (2, 4)


# --- plain kappa ----------------------------------------------------------------


def test_fleiss_perfect_agreement_is_exactly_one():
    m = matrix_of([[NI] * 3, [URG] * 3, [MON] * 3])
    assert fleiss_kappa(m) == 1.0


def test_fleiss_hand_example():
    items = [[NI, NI, NI], [MON, URG, EMG]]
    assert fleiss_kappa(matrix_of(items)) == pytest.approx(0.25, abs=1e-15)
    assert fleiss_oracle(table_of(items)) == Fraction(1, 4)


def test_fleiss_single_category_degenerate():
    with pytest.raises(UndefinedEstimateError):
        fleiss_kappa(matrix_of([[NI] * 3, [NI] * 3]))


def test_fleiss_needs_two_ratings_per_item():
    with pytest.raises(UndefinedEstimateError):
        fleiss_kappa(matrix_of([[NI], [URG]]))


def test_fleiss_can_go_negative():
    m = matrix_of([[NI, MON], [MON, NI]])
    assert fleiss_kappa(m) == pytest.approx(-1.0)


def test_fleiss_permutation_invariance():
    items = [[NI, NI, MON], [URG, URG, URG], [EMG, MON, MON], [NI, URG, NI]]
    base = fleiss_kappa(matrix_of(items))
    rng = random.Random(7)
    shuffled = items[:]
    rng.shuffle(shuffled)
    assert fleiss_kappa(matrix_of(shuffled)) == pytest.approx(base, abs=1e-15)
    renamed = RatingMatrix()
    for i, labels in enumerate(items):
        for r, label in enumerate(labels):
            renamed.add(f"s{i}", f"zz{9 - r}", label)
    assert fleiss_kappa(renamed) == pytest.approx(base, abs=1e-15)


label_st = st.sampled_from(list(Severity))


@settings(max_examples=150, deadline=None)
@given(
    items=st.lists(
        st.lists(label_st, min_size=4, max_size=4), min_size=2, max_size=25
    )
)
def test_fleiss_matches_oracle(items):
    table = table_of(items)
    expected = fleiss_oracle(table)
    if expected is None:
        with pytest.raises(UndefinedEstimateError):
            fleiss_kappa(matrix_of(items))
    else:
        assert fleiss_kappa(matrix_of(items)) == pytest.approx(float(expected), abs=1e-12)


# --- weighted kappa -------------------------------------------------------------


def test_weighted_perfect_agreement_is_one():
    m = matrix_of([[NI] * 3, [EMG] * 3])
    assert fleiss_kappa_weighted(m) == 1.0


def test_weighted_rewards_near_misses():
    adjacent = [[NI, NI, MON]] * 6 + [[MON, MON, MON]] * 4
    extreme = [[NI, NI, EMG]] * 6 + [[MON, MON, MON]] * 4
    assert fleiss_kappa_weighted(matrix_of(adjacent)) > fleiss_kappa_weighted(
        matrix_of(extreme)
    )


def test_weighted_equals_plain_on_unanimous_items():
    items = [[NI] * 3, [URG] * 3, [MON] * 3, [EMG] * 3]
    assert fleiss_kappa_weighted(matrix_of(items)) == pytest.approx(
        fleiss_kappa(matrix_of(items)), abs=1e-12
    )


@settings(max_examples=150, deadline=None)
@given(
    items=st.lists(
        st.lists(label_st, min_size=3, max_size=3), min_size=2, max_size=25
    )
)
def test_weighted_matches_oracle(items):
    expected = weighted_fleiss_oracle(table_of(items))
    if expected is None:
        with pytest.raises(UndefinedEstimateError):
            fleiss_kappa_weighted(matrix_of(items))
    else:
        assert fleiss_kappa_weighted(matrix_of(items)) == pytest.approx(
            float(expected), abs=1e-12
        )


@settings(max_examples=100, deadline=None)
@given(
    items=st.lists(
        st.lists(label_st, min_size=5, max_size=5), min_size=2, max_size=20
    )
)
def test_per_category_matches_oracle_and_recombines(items):
    table = table_of(items)
    per_cat = per_category_kappa(matrix_of(items))
    weights = []
    combined = Fraction(0)
    for j, severity in enumerate(Severity):
        expected = per_category_kappa_oracle(table, j)
        if expected is None:
            assert per_cat[severity] is None
            continue
        assert per_cat[severity] == pytest.approx(float(expected), abs=1e-12)
        n = sum(table[0])
        p = Fraction(sum(row[j] for row in table), len(table) * n)
        weights.append(p * (1 - p))
        combined += p * (1 - p) * expected
    # category kappas recombine into the plain estimate
    if weights and sum(weights) > 0:
        overall = fleiss_oracle(table)
        if overall is not None:
            assert float(combined / sum(weights)) == pytest.approx(
                fleiss_kappa(matrix_of(items)), abs=1e-12
            )


# --- quadratic-weighted kappa ---------------------------------------------------


def test_qwk_on_shipped_fixtures():
    fixed = load_fixture(FIXED_GRID)
    adaptive = load_fixture(ADAPTIVE_GRID)
    assert fixed.total == adaptive.total == 467
    assert fixed.col_totals() == adaptive.col_totals() == (242, 121, 80, 24)
    k_fixed = quadratic_weighted_kappa(fixed)
    k_adaptive = quadratic_weighted_kappa(adaptive)
    assert k_fixed == pytest.approx(0.573, abs=0.01)
    assert k_adaptive == pytest.approx(0.235, abs=0.02)
    assert k_fixed == pytest.approx(float(qwk_oracle(fixed.counts)), abs=1e-12)
    assert k_adaptive == pytest.approx(float(qwk_oracle(adaptive.counts)), abs=1e-12)


def test_qwk_identity_and_transpose():
    diag = ConfusionMatrix4(((5, 0, 0, 0), (0, 7, 0, 0), (0, 0, 3, 0), (0, 0, 0, 2)))
    assert quadratic_weighted_kappa(diag) == 1.0
    c = load_fixture(ADAPTIVE_GRID)
    assert quadratic_weighted_kappa(c.transpose()) == pytest.approx(
        quadratic_weighted_kappa(c), abs=1e-12
    )


def test_qwk_degenerate_marginals():
    one_row = ConfusionMatrix4(((0,) * 4, (3, 4, 5, 6), (0,) * 4, (0,) * 4))
    with pytest.raises(UndefinedEstimateError):
        quadratic_weighted_kappa(one_row)
    with pytest.raises(UndefinedEstimateError):
        quadratic_weighted_kappa(one_row.transpose())
    with pytest.raises(UndefinedEstimateError):
        quadratic_weighted_kappa(ConfusionMatrix4(((0,) * 4,) * 4))


def test_grid_text_round_trip():
    c = load_fixture(FIXED_GRID)
    assert ConfusionMatrix4.from_grid_text(c.to_grid_text()) == c
    with pytest.raises(ValueError):
        ConfusionMatrix4.from_grid_text("1 2 3\n4 5 6\n")


# --- metric batteries ------------------------------------------------------------


def test_metrics4_on_fixtures():
    fixed = metrics4(load_fixture(FIXED_GRID))
    assert fixed.accuracy == Rate(250, 467)
    adaptive = metrics4(load_fixture(ADAPTIVE_GRID))
    assert adaptive.accuracy == Rate(234, 467)
    assert fixed.recall[EMG] == Rate(0, 24)
    assert fixed.precision[EMG] is None  # fixed baseline never predicts EMERGENCY
    assert fixed.recall[URG] == Rate(78, 80)
    assert fixed.precision[URG] == Rate(78, 250)


def test_metrics4_identities_on_fixtures():
    for name in (FIXED_GRID, ADAPTIVE_GRID):
        m = metrics4(load_fixture(name))
        assert (
            m.overtriage.fraction + m.undertriage.fraction + m.accuracy.fraction == 1
        )
        assert m.within_one.fraction >= m.accuracy.fraction


def test_metrics4_diagonal():
    m = metrics4(ConfusionMatrix4(((5, 0, 0, 0), (0, 7, 0, 0), (0, 0, 3, 0), (0, 0, 0, 2))))
    assert m.accuracy.value == 1.0
    assert m.overtriage.numerator == 0
    assert m.undertriage.numerator == 0


def test_binary_metrics_on_fixtures():
    fixed = binary_metrics(load_fixture(FIXED_GRID))
    assert (fixed.tp, fixed.fp, fixed.fn, fixed.tn) == (102, 148, 2, 215)
    assert fixed.sensitivity == Rate(102, 104)
    assert fixed.specificity == Rate(215, 363)
    assert fixed.ppv == Rate(102, 250)
    assert fixed.npv == Rate(215, 217)
    adaptive = binary_metrics(load_fixture(ADAPTIVE_GRID))
    assert adaptive.sensitivity == Rate(19, 104)
    assert adaptive.specificity == Rate(341, 363)
    assert adaptive.ppv == Rate(19, 41)
    assert adaptive.npv == Rate(341, 426)


def test_binary_metric_identities():
    for name in (FIXED_GRID, ADAPTIVE_GRID):
        b = binary_metrics(load_fixture(name))
        assert b.sensitivity.fraction == 1 - b.fnr.fraction
        assert b.specificity.fraction == 1 - b.fpr.fraction
        assert b.tp + b.fn == b.sensitivity.denominator
        assert b.tn + b.fp == b.specificity.denominator


def test_binary_metrics_all_correct():
    b = binary_metrics(ConfusionMatrix4(((5, 0, 0, 0), (0, 5, 0, 0), (0, 0, 5, 0), (0, 0, 0, 5))))
    assert b.sensitivity.value == b.specificity.value == b.accuracy.value == 1.0
    assert b.fpr.numerator == 0 and b.fnr.numerator == 0


# --- reference standards -----------------------------------------------------------


def test_majority_vote():
    assert majority_vote([EMG, EMG, URG]) is EMG
    assert majority_vote([EMG, URG, MON]) is EXCLUDED
    assert majority_vote([NI, NI, NI]) is NI
    assert majority_vote([URG, URG, MON, NI, NI]) is EXCLUDED  # 2 of 5 is no majority
    assert majority_vote([URG, URG, URG, NI, NI]) is URG
    with pytest.raises(ValueError):
        majority_vote([])


def test_max_severity_reference():
    assert max_severity_reference([NI, MON, EMG]) is EMG
    assert max_severity_reference([MON, MON, MON]) is MON
    assert max_severity_reference([URG, MON, NI]) is URG
    with pytest.raises(ValueError):
        max_severity_reference([])


def test_majority_and_max_builders():
    m = matrix_of([[URG, URG, NI], [EMG, URG, MON]])
    maj = majority_reference(m)
    assert maj.labels["s000"] is URG
    assert maj.labels["s001"] is EXCLUDED
    assert maj.evaluable() == {"s000": URG}
    assert maj.excluded_fraction() == Rate(1, 2)
    top = max_reference(m)
    assert top.labels["s001"] is EMG
    assert top.provenance == "max_severity"


def test_loo_reference():
    assignments = {"a": ("r1", "r2", "r3"), "b": ("r1", "r2", "r3"), "c": ("r2", "r3", "r4")}
    m = RatingMatrix()
    for item, labels in {"a": (URG, URG, NI), "b": (URG, MON, NI), "c": (MON, MON, MON)}.items():
        for rater, label in zip(assignments[item], labels):
            m.add(item, rater, label)
    ref = loo_reference(assignments, m, "r3")
    # r3 rated a, b, c; remaining pairs: a:(U,U) -> U, b:(U,M) -> EXCLUDED, c:(M,M) -> M
    assert ref.labels == {"a": URG, "b": EXCLUDED, "c": MON}
    assert ref.provenance == "loo:r3"
    # items r3 never graded are not part of the leave-one-out set
    ref1 = loo_reference(assignments, m, "r1")
    assert set(ref1.labels) == {"a", "b"}


def test_loo_never_consults_the_left_out_rater():
    assignments = {"a": ("r1", "r2", "r3")}
    base = RatingMatrix()
    base.add("a", "r1", URG)
    base.add("a", "r2", URG)
    base.add("a", "r3", NI)
    mutated = RatingMatrix()
    mutated.add("a", "r1", URG)
    mutated.add("a", "r2", URG)
    mutated.add("a", "r3", EMG)
    assert (
        loo_reference(assignments, base, "r3").labels
        == loo_reference(assignments, mutated, "r3").labels
    )


def test_loo_missing_rating_is_structural_error():
    assignments = {"a": ("r1", "r2", "r3")}
    m = RatingMatrix()
    m.add("a", "r1", URG)
    m.add("a", "r3", URG)
    with pytest.raises(ValueError, match="r2"):
        loo_reference(assignments, m, "r3")


def test_confusion_counts_and_missing_predictions():
    ref = majority_reference(matrix_of([[URG, URG, URG], [URG, URG, MON], [MON, EMG, NI]]))
    # s002 is a three-way split: EXCLUDED, so no prediction needed for it
    pred = {"s000": EMG, "s001": URG}
    c = confusion(pred, ref)
    assert c.total == 2
    assert c.counts[int(EMG)][int(URG)] == 1
    assert c.counts[int(URG)][int(URG)] == 1
    with pytest.raises(ValueError, match="s001"):
        confusion({"s000": EMG}, ref)


def test_confusion_hand_example():
    from rpm_triage.agreement import ReferenceStandard

    ref = ReferenceStandard("majority", {"x": URG, "y": URG, "z": MON})
    c = confusion({"x": EMG, "y": URG, "z": NI}, ref)
    assert c.counts[int(EMG)][int(URG)] == 1
    assert c.counts[int(URG)][int(URG)] == 1
    assert c.counts[int(NI)][int(MON)] == 1
    assert c.total == 3


# --- bootstrap ----------------------------------------------------------------------


def test_bootstrap_zero_variance_interval():
    m = matrix_of([[NI] * 3, [URG] * 3, [MON] * 3] * 4)
    ci = bootstrap_ci(fleiss_kappa, m, resamples=50, seed=11)
    assert (ci.low, ci.high) == (1.0, 1.0)


def test_bootstrap_is_deterministic():
    items = [[NI, NI, MON], [URG, URG, URG], [EMG, MON, MON], [NI, URG, NI]] * 5
    m = matrix_of(items)
    a = bootstrap_ci(fleiss_kappa, m, resamples=100, seed=42)
    b = bootstrap_ci(fleiss_kappa, m, resamples=100, seed=42)
    assert a == b
    c = bootstrap_ci(fleiss_kappa, m, resamples=100, seed=43)
    assert (a.low, a.high) != (c.low, c.high)


def test_bootstrap_redraws_and_reports_degenerate_resamples():
    # one unanimous-NI item dominates; resamples drawing only it are degenerate
    items = [[NI, NI, NI]] * 1 + [[URG, MON, URG]] * 1
    m = matrix_of(items)
    ci = bootstrap_ci(fleiss_kappa, m, resamples=40, seed=3)
    assert ci.redrawn > 0


def test_bootstrap_failure_when_mostly_degenerate():
    m = matrix_of([[NI, NI, NI], [NI, NI, NI]])
    with pytest.raises(CIFailureError):
        bootstrap_ci(fleiss_kappa, m, resamples=20, seed=5)


def test_kappa_with_ci_contains_point():
    rng = np.random.default_rng(88)
    items = []
    for _ in range(100):
        base = int(rng.integers(0, 4))
        labels = [
            Severity(int(np.clip(base + rng.integers(-1, 2), 0, 3))) for _ in range(3)
        ]
        items.append(labels)
    est = kappa_with_ci(matrix_of(items), method="fleiss", resamples=200, seed=9)
    assert est.ci_low <= est.point <= est.ci_high
    assert est.method == "fleiss"
    est_w = kappa_with_ci(matrix_of(items), method="fleiss_linear_weighted", resamples=200, seed=9)
    assert est_w.ci_low <= est_w.point <= est_w.ci_high


def test_qwk_with_ci():
    rng = np.random.default_rng(19)
    pairs = []
    for _ in range(150):
        ref = int(rng.integers(0, 4))
        pred = int(np.clip(ref + rng.integers(-1, 2), 0, 3))
        pairs.append((Severity(pred), Severity(ref)))
    est = qwk_with_ci(pairs, resamples=200, seed=2)
    assert est.method == "cohen_quadratic"
    assert est.ci_low <= est.point <= est.ci_high


def test_kappa_estimate_validates():
    with pytest.raises(ValueError):
        KappaEstimate(0.5, 0.6, 0.9, "fleiss", 100, 0)
    with pytest.raises(ValueError):
        KappaEstimate(0.5, 0.4, 0.9, "made_up", 100, 0)


# --- pairwise agreement ---------------------------------------------------------------


def test_pairwise_agreement():
    m = RatingMatrix()
    labels_a = {"i1": URG, "i2": MON, "i3": NI, "i4": EMG}
    labels_b = {"i1": URG, "i2": MON, "i3": URG, "i4": EMG}
    for item, label in labels_a.items():
        m.add(item, "a", label)
    for item, label in labels_b.items():
        m.add(item, "b", label)
    m.add("i9", "c", NI)
    grid = pairwise_agreement(m)
    assert grid["a"]["b"] == Rate(3, 4)
    assert grid["b"]["a"] == Rate(3, 4)
    assert grid["a"]["a"] == Rate(4, 4)
    assert grid["a"]["c"] is None


# --- ratings file format -----------------------------------------------------------------


def test_ratings_csv_round_trip(tmp_path):
    rows = [
        RatingRow("s1", "r1", URG, 12.5, 0),
        RatingRow("s1", "r2", MON, None, 0),
        RatingRow("s1", "r1", URG, 8.0, 1),
    ]
    path = tmp_path / "ratings.csv"
    assert write_ratings_csv(path, rows) == 3
    assert read_ratings_csv(path) == rows
    m = matrix_from_rows(rows)
    assert len(m) == 1
    assert m.ratings_for("s1") == {"r1": URG, "r2": MON}


def test_ratings_csv_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("item_id,rater_id\nx,y\n")
    with pytest.raises(ValueError, match="header"):
        read_ratings_csv(path)
    path.write_text(
        "item_id,rater_id,severity,duration_s,presentation_index\ns1,r1,9,,0\n"
    )
    with pytest.raises(ValueError, match=":2:"):
        read_ratings_csv(path)
