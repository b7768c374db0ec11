"""Greedy NMS that keeps the cluster structure it produces.

Standard NMS throws away everything but the survivors. Here each suppressed
candidate is recorded as a member of the cluster whose reserved candidate
suppressed it first, so the grouping can be read back afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Box, boxes_to_array
from .prediction import DensePrediction

DEFAULT_NMS_IOU = {"rcnn": 0.5, "rpn": 0.7}


@dataclass(frozen=True)
class Candidate:
    """A (sample, category) pair that survived the score threshold.

    ``index`` is unique per image; ``sample`` is the position of the owning
    sample in its DensePrediction. In class-aware mode one sample may yield
    several candidates, one per category above threshold.
    """

    index: int
    sample: int
    box: Box
    category: int
    score: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"candidate score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class Cluster:
    reserved: int
    members: tuple[int, ...]
    category: int


@dataclass(frozen=True)
class ClusterSet:
    """NMS clusters over the active candidates of one image.

    ``inactive`` lists sample positions that produced no candidate above the
    threshold. ``overflow`` lists candidate indices cut by ``max_active``; they
    are neither clustered nor clear background.
    """

    candidates: tuple[Candidate, ...]
    clusters: tuple[Cluster, ...]
    inactive: tuple[int, ...] = ()
    overflow: tuple[int, ...] = ()
    _by_index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_by_index", {c.index: c for c in self.candidates})

    def candidate(self, index: int) -> Candidate:
        return self._by_index[index]


def filter_active(
    pred: DensePrediction, tau: float, class_aware: bool
) -> tuple[list[Candidate], list[int]]:
    """Split samples into above-threshold candidates and clear background.

    Candidates are numbered in (sample, category) order, which is also the
    tie-break order used by NMS.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    active: list[Candidate] = []
    inactive: list[int] = []
    k = pred.num_foreground
    for pos, s in enumerate(pred.samples):
        if class_aware:
            cats = [(c, s.class_probs[c]) for c in range(k) if s.class_probs[c] >= tau]
        else:
            obj = s.class_probs[0] if pred.stage == "rpn" else 1.0 - s.class_probs[-1]
            cats = [(0, obj)] if obj >= tau else []
        if not cats:
            inactive.append(pos)
            continue
        for cat, score in cats:
            active.append(Candidate(len(active), pos, s.regressed_box, cat, float(score)))
    return active, inactive


def _greedy_clusters(
    boxes: np.ndarray, scores: np.ndarray, cats: np.ndarray, nms_iou: float
) -> list[tuple[int, list[int]]]:
    # positions are already in tie-break order; stable sort keeps it for equal scores
    order = np.argsort(-scores, kind="stable")
    boxes = boxes[order]
    cats = cats[order]
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    iw = np.minimum(boxes[:, None, 2], boxes[None, :, 2]) - np.maximum(boxes[:, None, 0], boxes[None, :, 0])
    ih = np.minimum(boxes[:, None, 3], boxes[None, :, 3]) - np.maximum(boxes[:, None, 1], boxes[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = areas[:, None] + areas[None, :] - inter
    ov = np.zeros_like(inter)
    np.divide(inter, union, out=ov, where=(union > 0.0) & (inter > 0.0))
    # suppresses[i, j]: kept candidate i would absorb candidate j
    suppresses = (ov >= nms_iou) & (cats[:, None] == cats[None, :])

    alive = np.ones(len(order), dtype=bool)
    out = []
    for i in range(len(order)):
        if not alive[i]:
            continue
        # every position before i is already kept or absorbed, so alive only looks forward
        alive[i] = False
        hit = np.flatnonzero(suppresses[i] & alive)
        alive[hit] = False
        out.append((int(order[i]), [int(order[i])] + order[hit].tolist()))
    return out


def clustered_nms(
    active: Sequence[Candidate],
    nms_iou: float,
    inactive: Sequence[int] = (),
    max_active: int | None = None,
) -> ClusterSet:
    """Run greedy NMS and record which reserved candidate absorbed each member.

    A candidate joins the cluster of the first (highest-scored) reserved
    candidate of its category with IoU >= ``nms_iou``. Score ties go to the
    lower candidate index.
    """
    if not 0.0 < nms_iou < 1.0:
        raise ValueError(f"nms_iou must lie in (0, 1), got {nms_iou}")
    active = list(active)
    overflow: list[int] = []
    if max_active is not None and len(active) > max_active:
        ranked = sorted(active, key=lambda c: (-c.score, c.index))
        keep = {c.index for c in ranked[:max_active]}
        overflow = sorted(c.index for c in active if c.index not in keep)
        active = [c for c in active if c.index in keep]
    active.sort(key=lambda c: c.index)

    clusters: list[Cluster] = []
    if active:
        boxes = boxes_to_array([c.box for c in active])
        scores = np.array([c.score for c in active], dtype=np.float64)
        cats = np.array([c.category for c in active], dtype=np.int64)
        for reserved, members in _greedy_clusters(boxes, scores, cats, nms_iou):
            clusters.append(
                Cluster(
                    active[reserved].index,
                    tuple(active[m].index for m in members),
                    active[reserved].category,
                )
            )
    return ClusterSet(tuple(active), tuple(clusters), tuple(inactive), tuple(overflow))


def cluster_prediction(
    pred: DensePrediction,
    tau: float,
    nms_iou: float,
    class_aware: bool | None = None,
    max_active: int | None = None,
) -> ClusterSet:
    """Threshold then cluster one prediction; R-CNN is class-aware by default."""
    if class_aware is None:
        class_aware = pred.stage == "rcnn"
    active, inactive = filter_active(pred, tau, class_aware)
    return clustered_nms(active, nms_iou, inactive, max_active)


def reserved_boxes(cs: ClusterSet) -> list[tuple[Box, int, float]]:
    out = []
    for cl in cs.clusters:
        c = cs.candidate(cl.reserved)
        out.append((c.box, c.category, c.score))
    return out


def check_cluster_invariants(cs: ClusterSet, nms_iou: float) -> list[str]:
    """Return a description of every violated ClusterSet invariant (empty if sound)."""
    from .geometry import iou

    problems = []
    seen: dict[int, int] = {}
    for j, cl in enumerate(cs.clusters):
        if cl.reserved not in cl.members:
            problems.append(f"cluster {j}: reserved not among members")
        res = cs.candidate(cl.reserved)
        if res.category != cl.category:
            problems.append(f"cluster {j}: category differs from reserved")
        for m in cl.members:
            if m in seen:
                problems.append(f"candidate {m} in clusters {seen[m]} and {j}")
            seen[m] = j
            c = cs.candidate(m)
            if c.category != cl.category:
                problems.append(f"cluster {j}: member {m} has category {c.category}")
            if (c.score, -c.index) > (res.score, -res.index):
                problems.append(f"cluster {j}: member {m} outranks reserved")
            if m != cl.reserved and iou(c.box, res.box) < nms_iou:
                problems.append(f"cluster {j}: member {m} overlaps reserved below threshold")
    clustered = set(seen)
    expected = {c.index for c in cs.candidates}
    if clustered != expected:
        problems.append(
            f"clusters cover {len(clustered)} candidates, active set has {len(expected)}"
        )
    active_samples = {c.sample for c in cs.candidates}
    overlap = active_samples.intersection(cs.inactive)
    if overlap:
        problems.append(f"samples both active and inactive: {sorted(overlap)}")
    if len(set(cs.inactive)) != len(cs.inactive):
        problems.append("duplicate inactive sample")
    return problems
