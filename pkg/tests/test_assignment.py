"""Assignment plan invariants: balance, connectivity, anchor scheduling."""

import itertools

import pytest

from rpm_triage.assignment import AssignmentPlan, build_assignment


class TestDefaultPlan:
    def test_paper_scale_counts(self):
        plan = build_assignment(500, 6, 3, anchors_per_reviewer=20, seed=5)
        for reviewer in plan.reviewer_ids:
            assert len(plan.uniques(reviewer)) == 250
            assert plan.total_gradings(reviewer) == 330
            assert len(plan.anchors[reviewer]) == 20

    def test_every_pair_coreviews_exactly_100(self):
        plan = build_assignment(500, 6, 3, seed=5)
        counts = plan.co_review_counts()
        assert len(counts) == 15
        assert all(n == 100 for n in counts.values())

    def test_panels_distinct_and_sized(self):
        plan = build_assignment(500, 6, 3, seed=5)
        for panel in plan.panels.values():
            assert len(panel) == 3
            assert len(set(panel)) == 3

    def test_anchor_arithmetic(self):
        # 330 = 250 uniques + 20 anchors x 4 repeat presentations
        plan = build_assignment(500, 6, 3, anchors_per_reviewer=20,
                                presentations=5, seed=5)
        reviewer = plan.reviewer_ids[0]
        queue = plan.queues[reviewer]
        repeats = [i for i in queue if i.presentation_index > 1]
        assert len(repeats) == 80
        per_anchor = {}
        for item in repeats:
            per_anchor.setdefault(item.sample_id, []).append(item.presentation_index)
        assert set(per_anchor) == set(plan.anchors[reviewer])
        for indices in per_anchor.values():
            assert sorted(indices) == [2, 3, 4, 5]

    def test_presentation_indices_ascend_in_queue_order(self):
        plan = build_assignment(500, 6, 3, seed=9)
        for queue in plan.queues.values():
            seen: dict[str, int] = {}
            for item in queue:
                assert item.presentation_index == seen.get(item.sample_id, 0) + 1
                seen[item.sample_id] = item.presentation_index

    def test_anchors_come_from_own_uniques(self):
        plan = build_assignment(500, 6, 3, seed=9)
        for reviewer in plan.reviewer_ids:
            assert set(plan.anchors[reviewer]) <= set(plan.uniques(reviewer))

    def test_nothing_marks_anchor_rows_beyond_index(self):
        # A queue item exposes exactly id, sample and index; repeats are
        # distinguishable only by the index, which the service keeps back.
        plan = build_assignment(100, 6, 3, anchors_per_reviewer=4, seed=2)
        item = plan.queues[plan.reviewer_ids[0]][0]
        assert set(item.to_record()) == {
            "presentation_id", "sample_id", "presentation_index",
        }

    def test_deterministic(self):
        a = build_assignment(500, 6, 3, seed=11)
        b = build_assignment(500, 6, 3, seed=11)
        assert a.to_record() == b.to_record()

    def test_seed_moves_anchor_positions(self):
        a = build_assignment(500, 6, 3, seed=1)
        b = build_assignment(500, 6, 3, seed=2)
        assert a.to_record() != b.to_record()

    def test_explicit_ids_pass_through(self):
        plan = build_assignment(
            samples=[f"r{i:06d}" for i in range(40)],
            reviewers=["ana", "ben", "cleo", "dev", "eli", "fay"],
            per_sample=3,
            anchors_per_reviewer=2,
            seed=0,
        )
        assert plan.sample_ids[0] == "r000000"
        assert set(plan.reviewer_ids) == {"ana", "ben", "cleo", "dev", "eli", "fay"}
        for reviewer in plan.reviewer_ids:
            assert len(plan.uniques(reviewer)) == 20
            assert plan.total_gradings(reviewer) == 28

    def test_degenerate_three_of_three(self):
        plan = build_assignment(12, 3, 3, anchors_per_reviewer=2, seed=0)
        for panel in plan.panels.values():
            assert set(panel) == set(plan.reviewer_ids)
        for reviewer in plan.reviewer_ids:
            assert len(plan.uniques(reviewer)) == 12


class TestShuffledPlan:
    def test_same_balance_different_layout(self):
        cycle = build_assignment(500, 6, 3, seed=4)
        shuffled = build_assignment(500, 6, 3, seed=4, method="shuffled")
        assert shuffled.panels != cycle.panels
        counts = shuffled.co_review_counts()
        assert all(n == 100 for n in counts.values())
        for reviewer in shuffled.reviewer_ids:
            assert len(shuffled.uniques(reviewer)) == 250
            assert shuffled.total_gradings(reviewer) == 330

    def test_shuffled_is_deterministic(self):
        a = build_assignment(500, 6, 3, seed=4, method="shuffled")
        b = build_assignment(500, 6, 3, seed=4, method="shuffled")
        assert a.to_record() == b.to_record()


class TestValidationErrors:
    def test_uneven_reviewer_load(self):
        with pytest.raises(ValueError, match="divide evenly among reviewers"):
            build_assignment(499, 6, 3)

    def test_uneven_combination_cycling(self):
        # 6 reviewers choose 3 gives 20 combinations; 470 x 3 = 1410 splits
        # 6 ways but 470 % 20 != 0.
        with pytest.raises(ValueError, match="combination"):
            build_assignment(470, 6, 3)

    def test_per_sample_exceeds_panel(self):
        with pytest.raises(ValueError, match="exceeds the 4 reviewers"):
            build_assignment(20, 4, 5)

    def test_per_sample_too_small(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_assignment(20, 4, 1)

    def test_too_many_anchors(self):
        with pytest.raises(ValueError, match="exceeds the 10 uniques"):
            build_assignment(20, 6, 3, anchors_per_reviewer=11)

    def test_unknown_method(self):
        with pytest.raises(ValueError, match="unknown assignment method"):
            build_assignment(20, 6, 3, method="greedy")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_assignment(samples=["a", "a", "b"], reviewers=3, per_sample=3)


class TestRoundTrip:
    def test_record_round_trip(self):
        plan = build_assignment(100, 6, 3, anchors_per_reviewer=5, seed=3)
        back = AssignmentPlan.from_record(plan.to_record())
        assert back == plan
        back.validate()

    def test_validate_catches_tampering(self):
        plan = build_assignment(100, 6, 3, anchors_per_reviewer=5, seed=3)
        record = plan.to_record()
        reviewer = record["reviewer_ids"][0]
        record["queues"][reviewer] = record["queues"][reviewer][:-1]
        with pytest.raises(ValueError):
            AssignmentPlan.from_record(record).validate()


class TestConnectivity:
    @pytest.mark.parametrize("reviewers,per_sample", [(4, 2), (5, 3), (6, 3)])
    def test_all_pairs_touch(self, reviewers, per_sample):
        n_triples = len(list(itertools.combinations(range(reviewers), per_sample)))
        samples = n_triples * reviewers * 2
        plan = build_assignment(samples, reviewers, per_sample,
                                anchors_per_reviewer=1, seed=0)
        assert all(n >= 1 for n in plan.co_review_counts().values())
