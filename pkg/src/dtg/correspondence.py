"""One-to-one pairing of teacher samples with student samples.

R-CNN samples are paired trivially because the student is fed the teacher's
proposals. RPN anchors are tiled per view, so each teacher anchor is carried
into student space, given a pyramid level, and paired with the best
overlapping student anchor on that level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import AugTransform, Box, boxes_to_array, cross_space_array, pairwise_iou


class CorrespondenceError(ValueError):
    """Teacher and student sample sets cannot be paired as wired."""


@dataclass(frozen=True)
class FpnConfig:
    num_levels: int = 5
    base_anchor_size: float = 32.0
    # divisor of the raw log-area level formula; kept for reference, see raw_level_index
    S: float = 32.0

    def __post_init__(self) -> None:
        if self.num_levels < 1:
            raise ValueError("num_levels must be >= 1")
        if not self.base_anchor_size > 0:
            raise ValueError("base_anchor_size must be positive")
        if not self.S > 0:
            raise ValueError("S must be positive")


@dataclass(frozen=True)
class CorrespondenceMap:
    pairs: tuple[tuple[int, int], ...]
    unmatched_teacher: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        t = [p[0] for p in self.pairs]
        s = [p[1] for p in self.pairs]
        if len(set(s)) != len(s):
            raise CorrespondenceError("student index paired twice")
        if len(set(t)) != len(t) or set(t).intersection(self.unmatched_teacher):
            raise CorrespondenceError("teacher index paired twice")

    def teacher_to_student(self) -> dict[int, int]:
        return dict(self.pairs)

    def covered_teachers(self) -> set[int]:
        return {p[0] for p in self.pairs}.union(self.unmatched_teacher)


def match_rcnn(teacher_proposals: Sequence[Box], num_student: int) -> CorrespondenceMap:
    if num_student != len(teacher_proposals):
        raise CorrespondenceError(
            f"student got {num_student} samples for {len(teacher_proposals)} copied proposals"
        )
    return CorrespondenceMap(tuple((i, i) for i in range(num_student)))


def _scale_level(side: float, base: float) -> int:
    # round(log2(side / base)) via frexp so that doubling the side shifts the
    # level by exactly one, independent of libm rounding in log2
    mant, exp = math.frexp(side / base)
    return exp + math.floor(math.log2(mant) + 0.5)


def assign_fpn_level(anchor: Box, cfg: FpnConfig) -> int:
    """Pyramid level whose base anchor scale is nearest to the anchor's scale."""
    area = anchor.area
    if not area > 0.0:
        raise ValueError(f"anchor has no area: {anchor}")
    level = _scale_level(math.sqrt(area), cfg.base_anchor_size)
    return min(max(level, 0), cfg.num_levels - 1)


def raw_level_index(anchor: Box, cfg: FpnConfig) -> float:
    """Unclamped ``log2(area / S)``; not a usable pyramid index on its own."""
    return math.log2(anchor.area / cfg.S)


def match_rpn(
    teacher_anchors: Sequence[Box],
    teacher_t: AugTransform,
    student_t: AugTransform,
    student_anchors_by_level: Sequence[Sequence[Box]],
    cfg: FpnConfig,
) -> CorrespondenceMap:
    """Pair teacher anchors with student anchors by max IoU within a level.

    Student indices run over the levels concatenated in order. Conflicts are
    settled greedily: teachers are visited in descending best-IoU order (ties
    by teacher index) and a teacher whose best student is already taken stays
    unmatched. Teachers with no overlapping student anchor are unmatched.
    """
    n = len(teacher_anchors)
    if n == 0:
        return CorrespondenceMap(())
    mapped = cross_space_array(boxes_to_array(teacher_anchors), teacher_t, student_t)
    levels = np.empty(n, dtype=np.int64)
    for i, row in enumerate(mapped):
        levels[i] = assign_fpn_level(Box.from_seq(row), cfg)

    offsets = np.cumsum([0] + [len(lv) for lv in student_anchors_by_level])
    best_student = np.full(n, -1, dtype=np.int64)
    best_iou = np.zeros(n)
    for lv, anchors in enumerate(student_anchors_by_level):
        rows = np.nonzero(levels == lv)[0]
        if rows.size == 0 or len(anchors) == 0:
            continue
        ious = pairwise_iou(mapped[rows], boxes_to_array(anchors))
        arg = np.argmax(ious, axis=1)
        best_iou[rows] = ious[np.arange(rows.size), arg]
        best_student[rows] = arg + offsets[lv]

    order = sorted(range(n), key=lambda i: (-best_iou[i], i))
    claimed: set[int] = set()
    pairs = []
    unmatched = []
    for i in order:
        s = int(best_student[i])
        if s < 0 or best_iou[i] <= 0.0 or s in claimed:
            unmatched.append(i)
            continue
        claimed.add(s)
        pairs.append((i, s))
    pairs.sort()
    return CorrespondenceMap(tuple(pairs), tuple(sorted(unmatched)))


def group_by_level(anchors: Sequence[Box], cfg: FpnConfig) -> tuple[list[list[Box]], list[int]]:
    """Bucket anchors by assigned level.

    Returns the buckets and, for each position in the concatenated buckets,
    the index of the anchor in the input sequence.
    """
    buckets: list[list[Box]] = [[] for _ in range(cfg.num_levels)]
    origin: list[list[int]] = [[] for _ in range(cfg.num_levels)]
    for i, a in enumerate(anchors):
        lv = assign_fpn_level(a, cfg)
        buckets[lv].append(a)
        origin[lv].append(i)
    return buckets, [i for lv in origin for i in lv]
