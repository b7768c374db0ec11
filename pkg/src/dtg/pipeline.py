"""Per-image supervision: teacher dense prediction in, student labels and losses out."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

from .correspondence import CorrespondenceError, CorrespondenceMap, FpnConfig, group_by_level, match_rcnn, match_rpn
from .geometry import cross_space
from .labels import TrainingLabelSet, derive_labels, sparse_to_dense_assign
from .losses import LossConfig, LossReport, image_losses, student_deltas
from .nms import ClusterSet, cluster_prediction, reserved_boxes
from .prediction import DensePrediction

Paradigm = Literal["dense", "baseline"]


class InvariantViolation(RuntimeError):
    """An internal consistency check failed; results must not be trusted."""


@dataclass
class RunConfig:
    tau_rpn: float = 0.9
    tau_rcnn: float = 0.45
    nms_iou_rpn: float = 0.7
    nms_iou_rcnn: float = 0.5
    T: float = 1.0
    beta: float = 3.0
    alpha: float = 4.0
    gamma: float = 2.0
    alpha_f: float = 0.25
    beta_sl1: float = 1.0
    regression_target: Literal["reserved", "all"] = "reserved"
    pseudo_score_thresh: float = 0.9
    pos_iou: float = 0.5
    neg_iou: float = 0.5
    max_active: int | None = None
    num_levels: int = 5
    base_anchor_size: float = 32.0
    l_labeled: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("tau_rpn", "tau_rcnn", "nms_iou_rpn", "nms_iou_rcnn"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.pseudo_score_thresh <= 1.0:
            raise ValueError("pseudo_score_thresh must lie in [0, 1]")
        if self.pos_iou < self.neg_iou:
            raise ValueError("pos_iou must be >= neg_iou")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.beta_sl1 > 0:
            raise ValueError("beta_sl1 must be positive")
        if self.regression_target not in ("reserved", "all"):
            raise ValueError(f"unknown regression target {self.regression_target!r}")
        if self.max_active is not None and self.max_active < 1:
            raise ValueError("max_active must be positive")

    def tau(self, stage: str) -> float:
        return self.tau_rpn if stage == "rpn" else self.tau_rcnn

    def nms_iou(self, stage: str) -> float:
        return self.nms_iou_rpn if stage == "rpn" else self.nms_iou_rcnn

    def loss_config(self) -> LossConfig:
        return LossConfig(self.T, self.beta, self.alpha, self.gamma, self.alpha_f, self.beta_sl1)

    def fpn(self) -> FpnConfig:
        return FpnConfig(self.num_levels, self.base_anchor_size)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Supervision:
    labels: TrainingLabelSet
    report: LossReport
    clusters: ClusterSet
    correspondence: CorrespondenceMap
    rm_groups: dict = field(default_factory=dict)


def correspond(teacher: DensePrediction, student: DensePrediction, cfg: RunConfig) -> CorrespondenceMap:
    if teacher.stage != student.stage:
        raise CorrespondenceError(f"stage mismatch: teacher {teacher.stage}, student {student.stage}")
    if teacher.image_id != student.image_id:
        raise CorrespondenceError(f"image id mismatch: {teacher.image_id!r} vs {student.image_id!r}")
    if teacher.stage == "rcnn":
        cm = match_rcnn([s.sample_box for s in teacher.samples], len(student))
        if teacher.sample_ids() != student.sample_ids():
            raise CorrespondenceError("copied proposals must keep their sample ids")
        return cm
    fpn = cfg.fpn()
    by_level, origin = group_by_level([s.sample_box for s in student.samples], fpn)
    cm = match_rpn(
        [s.sample_box for s in teacher.samples], teacher.transform, student.transform, by_level, fpn
    )
    return CorrespondenceMap(
        tuple(sorted((t, origin[s]) for t, s in cm.pairs)), cm.unmatched_teacher
    )


def teacher_clusters(teacher: DensePrediction, cfg: RunConfig) -> ClusterSet:
    return cluster_prediction(
        teacher, cfg.tau(teacher.stage), cfg.nms_iou(teacher.stage), max_active=cfg.max_active
    )


def rank_groups(cs: ClusterSet, cm: CorrespondenceMap, labels: TrainingLabelSet) -> dict:
    """Cluster id -> (student positions, teacher member scores), in member order."""
    t2s = cm.teacher_to_student()
    groups = {}
    for j, cl in enumerate(cs.clusters):
        students, scores = [], []
        for m in cl.members:
            cand = cs.candidate(m)
            s = t2s.get(cand.sample)
            if s is not None and labels[s].cluster == j:
                students.append(s)
                scores.append(cand.score)
        if students:
            groups[j] = (students, scores)
    return groups


def pseudo_labels(teacher: DensePrediction, student: DensePrediction, cs: ClusterSet) -> list:
    return [
        (cross_space(box, teacher.transform, student.transform), cat, score)
        for box, cat, score in reserved_boxes(cs)
    ]


def dense_labels(teacher, student, cfg: RunConfig):
    cs = teacher_clusters(teacher, cfg)
    cm = correspond(teacher, student, cfg)
    labels = derive_labels(
        cs, cm, len(student), teacher.transform, student.transform, cfg.regression_target
    )
    return labels, cs, cm


def baseline_labels(teacher, student, cfg: RunConfig):
    cs = teacher_clusters(teacher, cfg)
    cm = correspond(teacher, student, cfg)
    labels = sparse_to_dense_assign(
        pseudo_labels(teacher, student, cs),
        cfg.pseudo_score_thresh,
        [s.sample_box for s in student.samples],
        cfg.pos_iou,
        cfg.neg_iou,
    )
    return labels, cs, cm


def supervise_image(
    teacher: DensePrediction,
    student: DensePrediction,
    cfg: RunConfig | None = None,
    paradigm: Paradigm = "dense",
) -> Supervision:
    cfg = cfg or RunConfig()
    if paradigm == "dense":
        labels, cs, cm = dense_labels(teacher, student, cfg)
        groups = rank_groups(cs, cm, labels)
    elif paradigm == "baseline":
        labels, cs, cm = baseline_labels(teacher, student, cfg)
        groups = {}
    else:
        raise ValueError(f"unknown paradigm {paradigm!r}")
    report = image_losses(
        labels,
        student.foreground_probs(),
        student_deltas(student),
        student.sample_boxes(),
        groups,
        cfg.loss_config(),
        cfg.l_labeled,
    )
    problems = report.check(cfg.beta)
    if len(labels) != len(student):
        problems.append("label count differs from student sample count")
    if problems:
        raise InvariantViolation("; ".join(problems))
    return Supervision(labels, report, cs, cm, groups)
