"""Report assembly tests: thirteen tables, exact-count cells, audits,
byte-deterministic rendering, and the mini end-to-end pipeline."""

import json

import pytest

from rpm_triage.agreement import Rate, RatingMatrix
from rpm_triage.cohort import ScenarioKind, SimConfig
from rpm_triage.core import Severity, VitalHistory
from rpm_triage.pipeline import DeskStudyConfig, run_desk_study
from rpm_triage.raters import (
    AdaptiveBaselineRater,
    FixedBaselineRater,
    RaterCase,
)
from rpm_triage.report import (
    AuditError,
    Check,
    StudyReport,
    Table,
    build_report,
    format_cell,
    write_report,
)
from rpm_triage.studies import (
    AdjudicationCase,
    run_adjudication,
    run_baseline_comparison,
    run_irr,
    run_loo,
    run_validation,
)

from helpers import at, bp

NI, MON, URG, EMG = (
    Severity.NOT_AN_ISSUE,
    Severity.MONITOR,
    Severity.URGENT,
    Severity.EMERGENCY,
)


def empty_case(reading):
    return RaterCase(reading=reading, history=VitalHistory(reading.patient_id))


def small_panel():
    labels = {
        "s01": (NI, NI, NI),
        "s02": (MON, MON, URG),
        "s03": (URG, URG, URG),
        "s04": (EMG, EMG, MON),
        "s05": (NI, MON, URG),
        "s06": (URG, URG, MON),
    }
    m = RatingMatrix()
    for item, (a, b, c) in labels.items():
        m.add(item, "rev1", a)
        m.add(item, "rev2", b)
        m.add(item, "rev3", c)
    return m, {"s01": NI, "s02": MON, "s03": URG, "s04": EMG,
               "s05": URG, "s06": URG}


def synthetic_report(seed=0):
    presets = [(118.0, 74.0), (105.0, 70.0), (150.0, 88.0)]
    cases = [
        empty_case(bp(*presets[i % 3], ts=at(days=i))) for i in range(9)
    ]
    irr = run_irr(FixedBaselineRater(), cases, runs=3, resamples=60)
    alerts = run_baseline_comparison(
        cases, [FixedBaselineRater(), AdaptiveBaselineRater()]
    )
    panel, verdicts = small_panel()
    validation = run_validation(panel, verdicts, "agent", resamples=60)
    assignments = {item: ("rev1", "rev2", "rev3") for item in panel.item_ids()}
    loo = run_loo(panel, assignments, verdicts, "agent")
    adjudication = run_adjudication(
        [AdjudicationCase("s90", EMG, MON), AdjudicationCase("s91", URG, NI)],
        {"s90": {"adj": URG}, "s91": {"adj": NI}},
    )
    return build_report(
        seed=seed,
        irr=irr,
        alert_rates=alerts,
        panel=panel,
        validation=validation,
        head_to_head=[validation],
        loo=loo,
        adjudication=adjudication,
    )


class TestFormatCell:
    def test_rate_keeps_exact_components(self):
        assert format_cell(Rate(102, 104)) == "102/104 (98.1%)"

    def test_none_is_a_dash(self):
        assert format_cell(None) == "-"

    def test_severity_renders_by_name(self):
        assert format_cell(EMG) == "emergency"


class TestAssembly:
    def test_thirteen_tables_numbered_in_order(self):
        report = synthetic_report()
        assert [t.number for t in report.tables] == list(range(1, 14))
        assert all(t.title for t in report.tables)

    def test_placeholders_for_missing_sections(self):
        report = build_report(seed=0)
        assert len(report.tables) == 13
        assert report.ok
        text = report.render()
        assert text.count("not computed") == 13

    def test_audits_all_pass_on_consistent_sections(self):
        report = synthetic_report()
        assert report.ok, report.failures()
        assert len(report.checks) >= 8

    def test_rate_cells_are_exact_fractions(self):
        report = synthetic_report()
        alert_rows = report.table(4).rows
        assert any(
            isinstance(cell, Rate) for row in alert_rows for cell in row
        )
        record = report.to_record()
        table4 = next(t for t in record["tables"] if t["number"] == 4)
        rate_cells = [
            c for row in table4["rows"] for c in row
            if isinstance(c, dict) and "numerator" in c
        ]
        assert rate_cells, "alert table lost its exact counts"

    def test_confusion_rows_sum_to_evaluable_n(self):
        report = synthetic_report()
        table8 = report.table(8)
        grid_rates = [
            cell
            for row in table8.rows if str(row[0]).startswith("predicted ")
            for cell in row[1:] if isinstance(cell, Rate)
        ]
        assert len(grid_rates) == 16
        n = {c.denominator for c in grid_rates}.pop()
        assert sum(c.numerator for c in grid_rates) == n

    def test_render_is_byte_deterministic(self):
        a, b = synthetic_report(seed=7), synthetic_report(seed=7)
        assert a.render() == b.render()
        assert a.to_record() == b.to_record()

    def test_failed_check_blocks_strict_render(self):
        table = Table(1, "broken", ("x",), (("y",),))
        report = StudyReport(
            "t", 0, (table,), (Check("counts_match", False, "1 != 2"),)
        )
        with pytest.raises(AuditError, match="counts_match"):
            report.render()
        loose = report.render(strict=False)
        assert "FAILED counts_match" in loose
        assert "0/1 checks passed" in loose

    def test_unknown_table_number(self):
        with pytest.raises(KeyError):
            synthetic_report().table(14)


class TestWriteReport:
    def test_files_written_and_stable(self, tmp_path):
        report = synthetic_report()
        write_report(report, tmp_path / "out")
        names = sorted(p.name for p in (tmp_path / "out").iterdir())
        assert "report.txt" in names
        assert "audit.json" in names
        assert sum(1 for n in names if n.startswith("table_")) == 13
        table4 = json.loads((tmp_path / "out" / "table_04.json").read_text())
        assert table4["number"] == 4
        first = (tmp_path / "out" / "report.txt").read_bytes()
        write_report(synthetic_report(), tmp_path / "out2")
        assert (tmp_path / "out2" / "report.txt").read_bytes() == first

    def test_strict_write_fails_on_bad_audit(self, tmp_path):
        report = StudyReport(
            "t", 0, (Table(1, "x", ("a",), ()),),
            (Check("bad", False, "no"),),
        )
        with pytest.raises(AuditError):
            write_report(report, tmp_path / "broken")


@pytest.fixture(scope="module")
def study():
    sim = SimConfig(
        seed=13, patient_count=40, reading_count=160, span_days=45,
        scenario_quotas={ScenarioKind.STABLE_BASELINE: 1},
    )
    config = DeskStudyConfig(
        seed=13, sim=sim, sample_count=None, anchors_per_reviewer=2,
        irr_cases=30, irr_runs=3, resamples=120,
    )
    return run_desk_study(config)


class TestDeskStudyPipeline:
    def test_report_renders_with_all_audits_green(self, study):
        assert study.report.ok, study.report.failures()
        text = study.report.render()
        assert "Table 13." in text

    def test_sampled_cases_match_plan(self, study):
        assert set(study.plan.sample_ids) == set(study.cases)
        assert len(study.plan.sample_ids) == 160
        for reviewer in study.plan.reviewer_ids:
            assert study.plan.total_gradings(reviewer) == 160 * 3 // 6 + 2 * 4

    def test_panel_covers_every_sample_three_ways(self, study):
        for item in study.panel.item_ids():
            assert len(study.panel.ratings_for(item)) == 3

    def test_rating_rows_include_anchor_representations(self, study):
        repeats = [r for r in study.rating_rows if r.presentation_index > 0]
        # 6 reviewers x 2 anchors x 4 extra passes
        assert len(repeats) == 48
        assert len(study.rating_rows) == 6 * (160 * 3 // 6 + 2 * 4)

    def test_deterministic_end_to_end(self, study):
        again = run_desk_study(study.config)
        assert again.report.render() == study.report.render()
        assert again.agent_verdicts == dict(study.agent_verdicts)

    def test_fixed_flags_more_than_adaptive_on_this_cohort(self, study):
        table = study.report.table(4)
        rows = {row[0]: row for row in table.rows}
        fixed_rate = rows["fixed_baseline"][6].value
        adaptive_rate = rows["adaptive_baseline"][6].value
        assert fixed_rate > adaptive_rate
