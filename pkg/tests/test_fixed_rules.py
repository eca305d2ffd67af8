"""Fixed-threshold baseline: guideline rules + modified early-warning score."""

import json
from importlib import resources

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from rpm_triage.core import PatientFlags, Severity
from rpm_triage.fixed_rules import (
    News2Score,
    criteria1_classify,
    default_fixed_rules,
    fixed_classify,
    load_fixed_rules,
    news2_flag,
    news2_score,
)

from helpers import at, bp, history_of, spo2, wt

NOBODY = PatientFlags()
COPD = PatientFlags(copd=True)
HF = PatientFlags(heart_failure=True)


def c1(reading, flags=NOBODY, history=None):
    return criteria1_classify(reading, flags, history or history_of())


def test_config_is_closed_over_the_expected_rule_count():
    config = default_fixed_rules()
    assert len(config.bp_rules) == 8
    assert len(config.spo2_rules) == 2
    assert len(config.weight_hf_rules) == 6
    assert len(config.weight_all_rules) == 7
    assert len(set(config.rule_ids())) == 23


def test_load_rejects_duplicate_rule_ids(tmp_path):
    raw = json.loads(
        resources.files("rpm_triage").joinpath("data/fixed_rules.json").read_text()
    )
    raw["criteria1"]["spo2"].append(dict(raw["criteria1"]["spo2"][0]))
    path = tmp_path / "rules.json"
    path.write_text(json.dumps(raw))
    with pytest.raises(ValueError, match="duplicate"):
        load_fixed_rules(path)


# --- Criteria 1 -------------------------------------------------------------


def test_hypertensive_crisis_case():
    severity, fired = c1(bp(202, 95, 87))
    assert severity is Severity.URGENT
    assert set(fired) == {"bp_crisis", "bp_elevated_140", "bp_single_crisis", "bp_range"}


def test_hypotension_case():
    severity, fired = c1(bp(80, 57))
    assert severity is Severity.URGENT
    assert set(fired) == {"hypotension", "bp_lt_100", "bp_range"}


def test_normal_bp_fires_nothing():
    severity, fired = c1(bp(118, 76, 64))
    assert severity is Severity.NOT_AN_ISSUE
    assert fired == []


def test_diastolic_only_crisis():
    # systolic fine, diastolic 112 trips the >=110 arm only
    _severity, fired = c1(bp(130, 112))
    assert set(fired) == {"bp_single_crisis"}


def test_bp_drop_rule_needs_recent_prior():
    prior = bp(140, 85, ts=at(days=-1))
    current = bp(120, 80, ts=at())
    _s, fired = c1(current, history=history_of(prior))
    assert "bp_drop_20" in fired
    # same drop but the prior reading is 8 days old: inert
    stale = bp(140, 85, ts=at(days=-8))
    _s, fired = c1(current, history=history_of(stale))
    assert "bp_drop_20" not in fired
    # no history at all: inert
    _s, fired = c1(current)
    assert "bp_drop_20" not in fired


def test_bp_drop_uses_most_recent_prior():
    far = bp(160, 85, ts=at(days=-3))
    near = bp(125, 80, ts=at(days=-1))
    current = bp(118, 78, ts=at())
    _s, fired = c1(current, history=history_of(far, near))
    # vs 125 the drop is only 7; the 160 three days back must not be used
    assert "bp_drop_20" not in fired


def test_bp_persistence_counts_hits_in_last_ten():
    readings = []
    for i in range(9):
        high = i in (0, 4, 8)
        readings.append(bp(150 if high else 125, 95 if high else 80, ts=at(days=-9 + i)))
    current = bp(126, 80, ts=at())
    _s, fired = c1(current, history=history_of(*readings))
    assert "bp_persistence" in fired


def test_bp_persistence_ignores_readings_beyond_the_last_ten():
    # three old hits pushed out of the 10-reading lookback by newer normals
    olds = [bp(170, 100, ts=at(days=-20 + i)) for i in range(3)]
    normals = [bp(120, 75, ts=at(days=-9 + i)) for i in range(9)]
    current = bp(122, 76, ts=at())
    _s, fired = c1(current, history=history_of(*(olds + normals)))
    assert "bp_persistence" not in fired


def test_bp_persistence_with_short_history_still_needs_three_hits():
    two = [bp(150, 95, ts=at(days=-2)), bp(151, 96, ts=at(days=-1))]
    _s, fired = c1(bp(120, 80, ts=at()), history=history_of(*two))
    assert "bp_persistence" not in fired
    _s, fired = c1(bp(152, 96, ts=at()), history=history_of(*two))
    assert "bp_persistence" in fired


def test_spo2_thresholds_depend_on_copd():
    assert c1(spo2(89), COPD)[1] == []
    assert c1(spo2(87.9), COPD)[1] == ["spo2_copd_88"]
    assert c1(spo2(93.9))[1] == ["spo2_noncopd_94"]
    assert c1(spo2(94))[1] == []
    # the COPD threshold does not apply to non-COPD patients and vice versa
    assert c1(spo2(89))[1] == ["spo2_noncopd_94"]


def test_hf_weight_gain_example():
    yesterday = wt(70.0, ts=at(days=-1))
    today = wt(71.2, ts=at())
    severity, fired = c1(today, HF, history_of(yesterday))
    assert severity is Severity.URGENT
    assert {"hf_weight_gain_0.9kg_1d", "hfsa_delta_0.9kg_1d", "multi_weight_1kg_1d"} <= set(fired)


def test_hf_only_rules_skipped_without_hf():
    yesterday = wt(70.0, ts=at(days=-1))
    today = wt(71.2, ts=at())
    _s, fired = c1(today, NOBODY, history_of(yesterday))
    assert "multi_weight_1kg_1d" in fired
    assert not any(r.startswith(("hf_", "hfsa_", "ccc_")) for r in fired)


def test_inclusive_vs_strict_weight_boundaries():
    # exactly 2.0 kg (dyadic, so the comparison is float-exact): the
    # inclusive consensus rule fires, the strict one does not
    two_days_ago = wt(70.0, ts=at(days=-2))
    current = wt(72.0, ts=at())
    _s, fired = c1(current, HF, history_of(two_days_ago))
    assert "hfsa_delta_2kg_3d" in fired
    assert "ccc_weight_2kg_5d" in fired
    assert "multi_weight_2kg_2d" not in fired


def test_weight_delta_uses_earliest_in_window():
    # rises 0.6/day; vs the earliest point 3 days back the 3-day gain is 1.8,
    # vs yesterday only 0.6
    points = [wt(70.0 + 0.6 * i, ts=at(days=-3 + i)) for i in range(3)]
    current = wt(71.8, ts=at())
    _s, fired = c1(current, NOBODY, history_of(*points))
    assert "multi_weight_0.91kg_1wk" in fired
    assert "multi_weight_1kg_1d" not in fired


def test_weight_loss_rule_direction():
    _s, fired = c1(wt(66.9, ts=at()), NOBODY, history_of(wt(70.0, ts=at(days=-1))))
    assert "multi_weight_loss_3kg_1d" in fired
    assert not any("gain" in r for r in fired)


def test_median_baseline_rule_needs_three_points():
    two = [wt(70.0, ts=at(days=-10)), wt(70.2, ts=at(days=-5))]
    _s, fired = c1(wt(72.5, ts=at()), NOBODY, history_of(*two))
    assert "multi_weight_2kg_baseline" not in fired
    three = two + [wt(69.8, ts=at(days=-2))]
    _s, fired = c1(wt(72.5, ts=at()), NOBODY, history_of(*three))
    assert "multi_weight_2kg_baseline" in fired  # |72.5 - 70.0| > 2
    _s, fired = c1(wt(67.9, ts=at()), NOBODY, history_of(*three))
    assert "multi_weight_2kg_baseline" in fired  # loss side counts too
    _s, fired = c1(wt(71.9, ts=at()), NOBODY, history_of(*three))
    assert "multi_weight_2kg_baseline" not in fired


def test_weight_rules_inert_without_history():
    severity, fired = c1(wt(70.0), HF)
    assert severity is Severity.NOT_AN_ISSUE
    assert fired == []


# --- Criteria 2: the modified early-warning score ---------------------------


def test_score_spo2_91_pulse_70():
    score = news2_score(spo2(91, 70), NOBODY)
    assert (score.spo2_points, score.pulse_points) == (3, 0)
    assert score.total == 3
    assert score.max_single == 3
    assert news2_flag(score) is Severity.URGENT


def test_score_sbp_115_pulse_80_all_zero():
    score = news2_score(bp(115, 70, 80), NOBODY)
    assert (score.sbp_points, score.pulse_points) == (0, 0)
    assert score.total == 0
    assert news2_flag(score) is Severity.NOT_AN_ISSUE


def test_score_sbp_95_pulse_115():
    score = news2_score(bp(95, 60, 115), NOBODY)
    assert (score.sbp_points, score.pulse_points) == (2, 2)
    assert score.total == 4
    assert score.max_single == 2
    assert news2_flag(score) is Severity.MONITOR


def test_weight_reading_scores_zero():
    score = news2_score(wt(70), NOBODY)
    assert score.total == 0
    assert score.max_single == 0
    assert news2_flag(score) is Severity.NOT_AN_ISSUE


def test_spo2_scale_selection():
    # scale 1 bands
    assert news2_score(spo2(91.9), NOBODY).spo2_points == 3
    assert news2_score(spo2(92), NOBODY).spo2_points == 2
    assert news2_score(spo2(95.5), NOBODY).spo2_points == 1
    assert news2_score(spo2(96), NOBODY).spo2_points == 0
    # scale 2, room air (COPD without home O2): >=93 scores 0
    assert news2_score(spo2(89), COPD).spo2_points == 0
    assert news2_score(spo2(87.5), COPD).spo2_points == 1
    assert news2_score(spo2(84), COPD).spo2_points == 2
    assert news2_score(spo2(83.9), COPD).spo2_points == 3
    assert news2_score(spo2(93), COPD).spo2_points == 0
    assert news2_score(spo2(99), COPD).spo2_points == 0
    # scale 2 on supplemental O2: high saturations score points again
    on_o2 = PatientFlags(home_o2=True)
    assert news2_score(spo2(93), on_o2).spo2_points == 1
    assert news2_score(spo2(95), on_o2).spo2_points == 2
    assert news2_score(spo2(97), on_o2).spo2_points == 3
    assert news2_score(spo2(90), on_o2).spo2_points == 0
    assert news2_score(spo2(86), on_o2).spo2_points == 1
    for reading, flags in [(spo2(93), on_o2), (spo2(89), COPD)]:
        assert news2_score(reading, flags).scale_used == 2
    assert news2_score(spo2(95), NOBODY).scale_used == 1


def test_pulse_bands():
    expect = {40: 3, 41: 1, 50.9: 1, 51: 0, 90.9: 0, 91: 1, 110.9: 1, 111: 2, 130.9: 2, 131: 3}
    for value, points in expect.items():
        assert news2_score(spo2(98, value), NOBODY).pulse_points == points, value


def test_sbp_bands():
    expect = {90.9: 3, 91: 2, 100.9: 2, 101: 1, 110.9: 1, 111: 0, 219.9: 0, 220: 3}
    for value, points in expect.items():
        assert news2_score(bp(value, 70, 75), NOBODY).sbp_points == points, value


def test_flag_ladder():
    assert news2_flag(News2Score()) is Severity.NOT_AN_ISSUE
    assert news2_flag(News2Score(spo2_points=1, pulse_points=0)) is Severity.MONITOR
    assert news2_flag(News2Score(spo2_points=2, pulse_points=2)) is Severity.MONITOR
    assert news2_flag(News2Score(spo2_points=3, pulse_points=0)) is Severity.URGENT
    assert news2_flag(News2Score(spo2_points=3, pulse_points=2)) is Severity.URGENT
    assert news2_flag(News2Score(spo2_points=3, pulse_points=3)) is Severity.URGENT
    # a >=7 total would be an emergency, but two components cap at 6
    assert news2_flag(News2Score(spo2_points=3, sbp_points=3, pulse_points=1)) is Severity.EMERGENCY


# --- Composition -------------------------------------------------------------


def test_fixed_classify_hypertensive_case_scores_zero_news2():
    trace = fixed_classify(bp(202, 95, 87), NOBODY, history_of())
    assert trace.severity is Severity.URGENT
    assert trace.component_scores["news2_total"] == 0
    assert "news2_flag" not in trace.fired_rules
    assert set(trace.fired_rules) == {"bp_crisis", "bp_elevated_140", "bp_single_crisis", "bp_range"}


def test_fixed_classify_monitor_from_news2_alone():
    trace = fixed_classify(spo2(96, 120), NOBODY, history_of())
    assert trace.severity is Severity.MONITOR
    assert trace.fired_rules == ("news2_flag",)
    assert trace.component_scores["news2_total"] == 2


def test_fixed_classify_weight_glitch():
    history = history_of(wt(70.0, ts=at(days=-1)))
    trace = fixed_classify(wt(1000.0, ts=at()), NOBODY, history)
    assert trace.severity is Severity.URGENT
    assert trace.component_scores["news2_total"] == 0
    assert "multi_weight_1kg_1d" in trace.fired_rules


def test_fixed_classify_trace_is_internally_consistent():
    trace = fixed_classify(bp(85, 55, 120), NOBODY, history_of())
    assert trace.rater_id == "fixed_baseline"
    assert trace.severity == max(trace.rule_severities.values())
    assert trace.duration_s >= 0


finite = st.floats(allow_nan=False, allow_infinity=False, width=32)
flags_st = st.builds(
    PatientFlags,
    copd=st.booleans(),
    heart_failure=st.booleans(),
    home_o2=st.booleans(),
)


@settings(max_examples=300, deadline=None)
@given(
    device=st.sampled_from(["bp", "spo2", "wt"]),
    values=st.tuples(finite, finite, finite),
    flags=flags_st,
    prior=st.lists(st.tuples(st.floats(-30, -0.01, allow_nan=False), finite), max_size=8),
)
def test_fixed_never_emergency_and_trace_invariant(device, values, flags, prior):
    if device == "bp":
        reading = bp(values[0], values[1], values[2], ts=at())
        prior_readings = [bp(v, v, v, ts=at(days=d)) for d, v in prior]
    elif device == "spo2":
        reading = spo2(values[0], values[1], ts=at())
        prior_readings = [spo2(v, v, ts=at(days=d)) for d, v in prior]
    else:
        reading = wt(values[0], ts=at())
        prior_readings = [wt(v, ts=at(days=d)) for d, v in prior]
    trace = fixed_classify(reading, flags, history_of(*prior_readings))
    assert trace.severity <= Severity.URGENT
    assert trace.severity == max(trace.rule_severities.values(), default=Severity.NOT_AN_ISSUE)


@settings(max_examples=200, deadline=None)
@given(
    device=st.sampled_from(["bp", "spo2", "wt"]),
    values=st.tuples(finite, finite, finite),
    flags=flags_st,
    prior=st.lists(st.tuples(st.floats(-30, -0.01, allow_nan=False), finite), max_size=8),
)
def test_criteria1_is_history_monotone_safe(device, values, flags, prior):
    if device == "bp":
        reading = bp(values[0], values[1], values[2], ts=at())
        prior_readings = [bp(v, v, v, ts=at(days=d)) for d, v in prior]
    elif device == "spo2":
        reading = spo2(values[0], values[1], ts=at())
        prior_readings = [spo2(v, v, ts=at(days=d)) for d, v in prior]
    else:
        reading = wt(values[0], ts=at())
        prior_readings = [wt(v, ts=at(days=d)) for d, v in prior]
    _s, bare = criteria1_classify(reading, flags, history_of())
    _s, with_history = criteria1_classify(reading, flags, history_of(*prior_readings))
    assert set(bare) <= set(with_history)


@settings(max_examples=200, deadline=None)
@given(lower=finite, higher=finite, flags=flags_st)
def test_spo2_points_monotone_nonincreasing_in_saturation(lower, higher, flags):
    lo, hi = sorted([lower, higher])
    # the supplemental-O2 branch is intentionally non-monotone above 93
    assume(not (flags.home_o2 and hi >= 93))
    lo_pts = news2_score(spo2(lo), flags).spo2_points
    hi_pts = news2_score(spo2(hi), flags).spo2_points
    assert lo_pts >= hi_pts
