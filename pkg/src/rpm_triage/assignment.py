"""Reviewer assignment planning.

Distributes samples over a reviewer panel so that every sample gets a fixed
number of graders, every reviewer carries an equal share, every reviewer
pair overlaps somewhere (so chance-corrected agreement is estimable across
the whole panel), and a subset of each reviewer's own samples is scheduled
for repeat presentation at seeded queue positions without being flagged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class QueueItem:
    """One slot in a reviewer's grading queue."""

    presentation_id: str
    sample_id: str
    presentation_index: int  # 1 = first pass, 2.. = anchor re-presentations

    def to_record(self) -> dict:
        return {
            "presentation_id": self.presentation_id,
            "sample_id": self.sample_id,
            "presentation_index": self.presentation_index,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "QueueItem":
        return cls(
            presentation_id=record["presentation_id"],
            sample_id=record["sample_id"],
            presentation_index=int(record["presentation_index"]),
        )


@dataclass(frozen=True)
class AssignmentPlan:
    sample_ids: tuple[str, ...]
    reviewer_ids: tuple[str, ...]
    panels: Mapping[str, tuple[str, ...]]
    queues: Mapping[str, tuple[QueueItem, ...]]
    anchors: Mapping[str, tuple[str, ...]]
    presentations: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "panels", MappingProxyType(dict(self.panels)))
        object.__setattr__(self, "queues", MappingProxyType(dict(self.queues)))
        object.__setattr__(self, "anchors", MappingProxyType(dict(self.anchors)))

    def uniques(self, reviewer_id: str) -> tuple[str, ...]:
        """Sample ids the reviewer grades, first passes only, queue order."""
        return tuple(
            item.sample_id
            for item in self.queues[reviewer_id]
            if item.presentation_index == 1
        )

    def co_review_counts(self) -> dict[frozenset, int]:
        counts = {
            frozenset(pair): 0
            for pair in itertools.combinations(self.reviewer_ids, 2)
        }
        for panel in self.panels.values():
            for pair in itertools.combinations(sorted(panel), 2):
                counts[frozenset(pair)] += 1
        return counts

    def total_gradings(self, reviewer_id: str) -> int:
        return len(self.queues[reviewer_id])

    def validate(self) -> None:
        """Re-derive every structural invariant; raises on any violation."""
        per_sample = len(next(iter(self.panels.values()))) if self.panels else 0
        for sample_id, panel in self.panels.items():
            if len(panel) != per_sample or len(set(panel)) != len(panel):
                raise ValueError(f"sample {sample_id}: panel is not distinct")
            for reviewer in panel:
                if reviewer not in self.reviewer_ids:
                    raise ValueError(f"sample {sample_id}: unknown reviewer {reviewer}")
        for reviewer in self.reviewer_ids:
            queue = self.queues[reviewer]
            expected_uniques = [
                s for s, panel in self.panels.items() if reviewer in panel
            ]
            firsts = [i for i in queue if i.presentation_index == 1]
            if sorted(i.sample_id for i in firsts) != sorted(expected_uniques):
                raise ValueError(f"{reviewer}: first passes do not match panels")
            anchor_set = set(self.anchors[reviewer])
            if not anchor_set <= {i.sample_id for i in firsts}:
                raise ValueError(f"{reviewer}: anchors outside own uniques")
            seen: dict[str, int] = {}
            for item in queue:
                expected_index = seen.get(item.sample_id, 0) + 1
                if item.presentation_index != expected_index:
                    raise ValueError(
                        f"{reviewer}: presentation indices out of order for "
                        f"{item.sample_id}"
                    )
                seen[item.sample_id] = expected_index
            for sample_id, count in seen.items():
                want = self.presentations if sample_id in anchor_set else 1
                if count != want:
                    raise ValueError(
                        f"{reviewer}: {sample_id} presented {count} times, "
                        f"expected {want}"
                    )
        lonely = [pair for pair, n in self.co_review_counts().items() if n == 0]
        if lonely:
            raise ValueError(f"disconnected reviewer pairs: {sorted(map(sorted, lonely))}")

    def to_record(self) -> dict:
        return {
            "sample_ids": list(self.sample_ids),
            "reviewer_ids": list(self.reviewer_ids),
            "panels": {s: list(p) for s, p in self.panels.items()},
            "queues": {
                r: [i.to_record() for i in q] for r, q in self.queues.items()
            },
            "anchors": {r: list(a) for r, a in self.anchors.items()},
            "presentations": self.presentations,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "AssignmentPlan":
        return cls(
            sample_ids=tuple(record["sample_ids"]),
            reviewer_ids=tuple(record["reviewer_ids"]),
            panels={s: tuple(p) for s, p in record["panels"].items()},
            queues={
                r: tuple(QueueItem.from_record(i) for i in q)
                for r, q in record["queues"].items()
            },
            anchors={r: tuple(a) for r, a in record["anchors"].items()},
            presentations=int(record["presentations"]),
            seed=int(record["seed"]),
        )


def _as_ids(value, prefix: str, width: int) -> tuple[str, ...]:
    if isinstance(value, int):
        return tuple(f"{prefix}{i:0{width}d}" for i in range(value))
    ids = tuple(str(v) for v in value)
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate {prefix} ids")
    return ids


def build_assignment(
    samples: int | Sequence[str] = 500,
    reviewers: int | Sequence[str] = 6,
    per_sample: int = 3,
    anchors_per_reviewer: int = 20,
    presentations: int = 5,
    seed: int = 0,
    method: str = "cycle",
) -> AssignmentPlan:
    """Build a balanced connected assignment.

    The default method walks the lexicographic reviewer combinations in a
    fixed cycle, so each combination gets samples/C(R, k) samples and each
    reviewer pair co-reviews the same count. ``method="shuffled"`` instead
    deals a seeded permutation of that same balanced multiset, for when the
    panel should not be able to predict its co-reviewers from sample order.

    Anchors are drawn (seeded) from each reviewer's own queue and re-presented
    ``presentations - 1`` further times at seeded later positions; nothing in
    the queue marks them.
    """
    sample_ids = _as_ids(samples, "s", 4)
    reviewer_ids = _as_ids(reviewers, "rev", 1)
    n_samples, n_reviewers = len(sample_ids), len(reviewer_ids)
    if per_sample < 2:
        raise ValueError("per_sample must be at least 2")
    if per_sample > n_reviewers:
        raise ValueError(
            f"per_sample={per_sample} exceeds the {n_reviewers} reviewers"
        )
    if presentations < 1:
        raise ValueError("presentations must be at least 1")
    if method not in ("cycle", "shuffled"):
        raise ValueError(f"unknown assignment method: {method}")
    if (n_samples * per_sample) % n_reviewers != 0:
        raise ValueError(
            "unbalanced load: samples x per_sample must divide evenly among "
            f"reviewers ({n_samples} x {per_sample} % {n_reviewers} != 0)"
        )
    triples = list(itertools.combinations(reviewer_ids, per_sample))
    if n_samples % len(triples) != 0:
        raise ValueError(
            "uneven combination cycling: samples must divide evenly among the "
            f"{len(triples)} reviewer combinations ({n_samples} % "
            f"{len(triples)} != 0)"
        )
    uniques_each = n_samples * per_sample // n_reviewers
    if anchors_per_reviewer > uniques_each:
        raise ValueError(
            f"anchors_per_reviewer={anchors_per_reviewer} exceeds the "
            f"{uniques_each} uniques each reviewer holds"
        )

    order = list(range(n_samples))
    if method == "shuffled":
        np.random.default_rng([seed, 101]).shuffle(order)
    panels = {
        sample_ids[idx]: triples[slot % len(triples)]
        for slot, idx in enumerate(order)
    }

    queues: dict[str, tuple[QueueItem, ...]] = {}
    anchors: dict[str, tuple[str, ...]] = {}
    for r_index, reviewer in enumerate(reviewer_ids):
        rng = np.random.default_rng([seed, 7, r_index])
        mine = [s for s in sample_ids if reviewer in panels[s]]
        rng.shuffle(mine)
        chosen = tuple(sorted(mine[:anchors_per_reviewer]))
        queue = [
            QueueItem(f"{reviewer}:{s}:1", s, 1) for s in mine
        ]
        for anchor in chosen:
            for k in range(2, presentations + 1):
                prev = next(
                    i for i, item in enumerate(queue)
                    if item.sample_id == anchor and item.presentation_index == k - 1
                )
                slot = int(rng.integers(prev + 1, len(queue) + 1))
                queue.insert(slot, QueueItem(f"{reviewer}:{anchor}:{k}", anchor, k))
        queues[reviewer] = tuple(queue)
        anchors[reviewer] = chosen

    plan = AssignmentPlan(
        sample_ids=sample_ids,
        reviewer_ids=reviewer_ids,
        panels=panels,
        queues=queues,
        anchors=anchors,
        presentations=presentations,
        seed=seed,
    )
    plan.validate()
    return plan
