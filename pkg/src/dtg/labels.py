"""Student training labels from teacher cluster structure, plus the IoU baseline.

``derive_labels`` reads the teacher's NMS clusters backwards: every student
sample paired with a cluster member is a positive of the cluster's category,
regressing towards the cluster's reserved box; partners of below-threshold
teacher samples are background. ``sparse_to_dense_assign`` is the conventional
route through thresholded pseudo boxes and IoU matching, kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .correspondence import CorrespondenceError, CorrespondenceMap
from .geometry import AugTransform, Box, boxes_to_array, cross_space, pairwise_iou
from .nms import ClusterSet

LabelKind = Literal["positive", "background", "ignore"]


@dataclass(frozen=True)
class SampleLabel:
    kind: LabelKind
    category: int | None = None
    target: Box | None = None
    cluster: int | None = None

    @property
    def is_positive(self) -> bool:
        return self.kind == "positive"


BACKGROUND = SampleLabel("background")
IGNORE = SampleLabel("ignore")


@dataclass(frozen=True)
class TrainingLabelSet:
    labels: tuple[SampleLabel, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> SampleLabel:
        return self.labels[i]

    def kinds(self) -> list[str]:
        return [lab.kind for lab in self.labels]

    def positives_by_cluster(self) -> dict[int, list[int]]:
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(self.labels):
            if lab.is_positive:
                groups.setdefault(lab.cluster, []).append(i)
        return groups


@dataclass(frozen=True)
class RegressionDelta:
    dx: float
    dy: float
    dw: float
    dh: float

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dw, self.dh])


def _center_size(b: Box) -> tuple[float, float, float, float]:
    w, h = b.x2 - b.x1, b.y2 - b.y1
    return b.x1 + 0.5 * w, b.y1 + 0.5 * h, w, h


def encode_delta(sample_box: Box, target: Box) -> RegressionDelta:
    sx, sy, sw, sh = _center_size(sample_box)
    tx, ty, tw, th = _center_size(target)
    if not (sw > 0 and sh > 0):
        raise ValueError(f"sample box has no area: {sample_box}")
    if not (tw > 0 and th > 0):
        raise ValueError(f"regression target has no area: {target}")
    return RegressionDelta((tx - sx) / sw, (ty - sy) / sh, math.log(tw / sw), math.log(th / sh))


def decode_delta(delta: RegressionDelta, sample_box: Box) -> Box:
    sx, sy, sw, sh = _center_size(sample_box)
    cx, cy = sx + delta.dx * sw, sy + delta.dy * sh
    w, h = sw * math.exp(delta.dw), sh * math.exp(delta.dh)
    return Box(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def derive_labels(
    cs: ClusterSet,
    cm: CorrespondenceMap,
    num_student: int,
    teacher_t: AugTransform | None = None,
    student_t: AugTransform | None = None,
    regression_target: Literal["reserved", "all"] = "reserved",
) -> TrainingLabelSet:
    """Inverse NMS clustering.

    Cluster, inactive and overflow indices refer to teacher sample positions
    (through ``Candidate.sample``). When one teacher sample is a member of
    several clusters (class-aware mode), the earliest cluster wins; clusters
    are created in descending reserved-score order. Student samples with no
    labelled teacher partner are ignored.
    """
    if regression_target not in ("reserved", "all"):
        raise ValueError(f"unknown regression target mode {regression_target!r}")
    covered = cm.covered_teachers()
    t2s = cm.teacher_to_student()

    def partner(sample: int) -> int | None:
        if sample not in covered:
            raise CorrespondenceError(f"teacher sample {sample} missing from correspondence")
        return t2s.get(sample)

    def to_student(b: Box) -> Box:
        if teacher_t is None or student_t is None:
            return b
        return cross_space(b, teacher_t, student_t)

    labels: list[SampleLabel] = [IGNORE] * num_student

    for sample in cs.inactive:
        s = partner(sample)
        if s is not None:
            labels[s] = BACKGROUND
    for idx in cs.overflow:
        partner(cs.candidate(idx).sample)

    for j, cl in enumerate(cs.clusters):
        reserved_target = to_student(cs.candidate(cl.reserved).box)
        for m in cl.members:
            cand = cs.candidate(m)
            s = partner(cand.sample)
            if s is None or labels[s].is_positive:
                continue
            target = reserved_target if regression_target == "reserved" else to_student(cand.box)
            labels[s] = SampleLabel("positive", cl.category, target, j)
    return TrainingLabelSet(tuple(labels))


def sparse_to_dense_assign(
    pseudo_labels: Sequence[tuple[Box, int, float]],
    score_thresh: float,
    student_samples: Sequence[Box],
    pos_iou: float = 0.5,
    neg_iou: float = 0.5,
) -> TrainingLabelSet:
    """Max-IoU assignment of student samples to confident pseudo boxes.

    Positive at IoU >= ``pos_iou``, background below ``neg_iou``, ignored in
    between. ``cluster`` on a positive label is the position of its pseudo box
    in the input list.
    """
    if pos_iou < neg_iou:
        raise ValueError("pos_iou must be >= neg_iou")
    kept = [(i, p) for i, p in enumerate(pseudo_labels) if p[2] >= score_thresh]
    if not kept:
        return TrainingLabelSet(tuple(BACKGROUND for _ in student_samples))
    if len(student_samples) == 0:
        return TrainingLabelSet(())
    ious = pairwise_iou(boxes_to_array(student_samples), boxes_to_array([p[0] for _, p in kept]))
    best = np.argmax(ious, axis=1)
    labels = []
    for row, col in enumerate(best):
        v = ious[row, col]
        if v >= pos_iou:
            src, (box, cat, _) = kept[col]
            labels.append(SampleLabel("positive", int(cat), box, src))
        elif v < neg_iou:
            labels.append(BACKGROUND)
        else:
            labels.append(IGNORE)
    return TrainingLabelSet(tuple(labels))
