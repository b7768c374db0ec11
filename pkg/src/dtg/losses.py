"""Classification, regression and rank-matching losses with analytic gradients.

Every primitive returns ``(value, gradient)``; gradients are taken with
respect to the student-side input (probabilities for focal and rank
matching, regression deltas for smooth L1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Box
from .labels import TrainingLabelSet, encode_delta
from .prediction import DensePrediction

PROB_EPS = 1e-7


def focal_loss(
    pred_prob: Sequence[float],
    target_class: int | None,
    gamma: float = 2.0,
    alpha_f: float = 0.25,
) -> tuple[float, np.ndarray]:
    """Binary focal loss summed over foreground classes.

    ``pred_prob`` holds one probability per foreground class. Each class is a
    one-vs-rest problem: the target class (if any) is positive, the rest are
    negative; ``target_class=None`` means background, so every class is
    negative. Probabilities are clamped to ``[PROB_EPS, 1 - PROB_EPS]`` and the
    gradient is zero where the clamp is active.
    """
    p_raw = np.asarray(pred_prob, dtype=np.float64)
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    y = np.zeros_like(p)
    if target_class is not None:
        y[target_class] = 1.0
    p_t = np.where(y == 1.0, p, 1.0 - p)
    a_t = np.where(y == 1.0, alpha_f, 1.0 - alpha_f)
    one_minus = 1.0 - p_t
    log_pt = np.log(p_t)
    loss = -a_t * one_minus**gamma * log_pt
    if gamma == 0.0:
        dl_dpt = -a_t / p_t
    else:
        dl_dpt = a_t * (gamma * one_minus ** (gamma - 1.0) * log_pt - one_minus**gamma / p_t)
    grad = np.where(y == 1.0, dl_dpt, -dl_dpt)
    grad = np.where((p_raw > PROB_EPS) & (p_raw < 1.0 - PROB_EPS), grad, 0.0)
    return float(loss.sum()), grad


def smooth_l1(pred, target, beta_sl1: float = 1.0) -> tuple[float, np.ndarray]:
    """Sum of per-coordinate smooth L1; gradient with respect to ``pred``."""
    pred = _as_vec(pred)
    d = pred - _as_vec(target)
    ad = np.abs(d)
    quad = ad < beta_sl1
    loss = np.where(quad, 0.5 * d * d / beta_sl1, ad - 0.5 * beta_sl1)
    grad = np.where(quad, d / beta_sl1, np.sign(d))
    return float(loss.sum()), grad


def _as_vec(x) -> np.ndarray:
    if hasattr(x, "as_array"):
        return x.as_array()
    return np.asarray(x, dtype=np.float64)


def _log_softmax(x: np.ndarray, T: float) -> np.ndarray:
    z = x / T
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


def rank_distribution(scores: Sequence[float], T: float = 1.0) -> np.ndarray:
    """Temperature softmax over a cluster's member scores."""
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("rank distribution needs at least one score")
    if not T > 0:
        raise ValueError("temperature must be positive")
    e = np.exp((s - s.max()) / T)
    return e / e.sum()


def rank_matching_loss(
    teacher_scores: Sequence[float], student_scores: Sequence[float], T: float = 1.0
) -> tuple[float, np.ndarray]:
    """KL(teacher rank distribution || student rank distribution)."""
    t = np.asarray(teacher_scores, dtype=np.float64)
    s = np.asarray(student_scores, dtype=np.float64)
    if t.shape != s.shape or t.ndim != 1:
        raise ValueError(f"teacher/student cluster scores misaligned: {t.shape} vs {s.shape}")
    if t.size == 0:
        raise ValueError("empty cluster")
    if t.size == 1:
        return 0.0, np.zeros(1)
    log_dt = _log_softmax(t, T)
    log_ds = _log_softmax(s, T)
    dt = np.exp(log_dt)
    kl = float(np.sum(dt * (log_dt - log_ds)))
    grad = (np.exp(log_ds) - dt) / T
    return kl, grad


def combine_unlabeled(l_cls: float, l_reg: float, l_rm: float, beta: float = 3.0) -> float:
    return l_cls + l_reg + beta * l_rm


def combine_total(l_labeled: float, l_unlabeled: float, alpha: float = 4.0) -> float:
    return l_labeled + alpha * l_unlabeled


@dataclass
class LossConfig:
    T: float = 1.0
    beta: float = 3.0
    alpha: float = 4.0
    gamma: float = 2.0
    alpha_f: float = 0.25
    beta_sl1: float = 1.0


@dataclass
class LossReport:
    """Per-image losses; gradients are of ``l_unlabeled``.

    ``grad_student_scores`` is ``[N, K]`` over the student's foreground
    probabilities, ``grad_student_deltas`` is ``[N, 4]`` over the student's
    regression deltas (regressed box encoded against its own sample box).
    """

    l_cls: float
    l_reg: float
    l_rm: float
    l_unlabeled: float
    l_total: float
    grad_student_scores: np.ndarray = field(repr=False)
    grad_student_deltas: np.ndarray = field(repr=False)
    num_groups: int = 0

    def check(self, beta: float) -> list[str]:
        problems = []
        if abs(self.l_unlabeled - combine_unlabeled(self.l_cls, self.l_reg, self.l_rm, beta)) > 1e-9:
            problems.append("l_unlabeled != l_cls + l_reg + beta * l_rm")
        if self.l_rm < -1e-12:
            problems.append(f"negative rank matching loss {self.l_rm}")
        for name in ("l_cls", "l_reg", "l_rm", "l_unlabeled", "l_total"):
            if not math.isfinite(getattr(self, name)):
                problems.append(f"{name} is not finite")
        return problems


def image_losses(
    labels: TrainingLabelSet,
    student_probs: np.ndarray,
    student_deltas: np.ndarray,
    student_boxes: np.ndarray,
    rm_groups: dict[int, tuple[list[int], list[float]]] | None = None,
    cfg: LossConfig | None = None,
    l_labeled: float = 0.0,
) -> LossReport:
    """Aggregate per-sample losses for one unlabeled image.

    Positives are grouped by cluster; a cluster contributes the mean of its
    members' losses and the per-cluster means are averaged over clusters. All
    background samples form one extra group for classification. Ignored
    samples contribute nothing. ``rm_groups`` maps cluster id to the student
    sample positions and aligned teacher scores used for rank matching.
    """
    cfg = cfg or LossConfig()
    student_probs = np.asarray(student_probs, dtype=np.float64)
    n = len(labels)
    k = student_probs.shape[1] if student_probs.ndim == 2 else 1
    if student_probs.shape[0] != n:
        raise ValueError(f"{student_probs.shape[0]} student score rows for {n} labels")
    g_scores = np.zeros((n, k))
    g_deltas = np.zeros((n, 4))

    clusters = labels.positives_by_cluster()
    background = [i for i, lab in enumerate(labels.labels) if lab.kind == "background"]
    cls_groups: list[tuple[list[int], bool]] = [(m, True) for _, m in sorted(clusters.items())]
    if background:
        cls_groups.append((background, False))

    l_cls = 0.0
    if cls_groups:
        w_group = 1.0 / len(cls_groups)
        for members, positive in cls_groups:
            w = w_group / len(members)
            for i in members:
                target = labels[i].category if positive else None
                v, g = focal_loss(student_probs[i], target, cfg.gamma, cfg.alpha_f)
                l_cls += w * v
                g_scores[i] += w * g

    l_reg = 0.0
    if clusters:
        w_group = 1.0 / len(clusters)
        for _, members in sorted(clusters.items()):
            w = w_group / len(members)
            for i in members:
                sample = Box.from_seq(student_boxes[i])
                target = encode_delta(sample, labels[i].target).as_array()
                v, g = smooth_l1(student_deltas[i], target, cfg.beta_sl1)
                l_reg += w * v
                g_deltas[i] += w * g

    l_rm = 0.0
    if rm_groups:
        w_group = 1.0 / len(rm_groups)
        for cid in sorted(rm_groups):
            members, t_scores = rm_groups[cid]
            cat = labels[members[0]].category
            s_scores = student_probs[members, cat]
            v, g = rank_matching_loss(t_scores, s_scores, cfg.T)
            l_rm += w_group * v
            g_scores[members, cat] += cfg.beta * w_group * g

    l_u = combine_unlabeled(l_cls, l_reg, l_rm, cfg.beta)
    return LossReport(
        l_cls,
        l_reg,
        l_rm,
        l_u,
        combine_total(l_labeled, l_u, cfg.alpha),
        g_scores,
        g_deltas,
        len(cls_groups),
    )


def student_deltas(student: DensePrediction) -> np.ndarray:
    """Regression deltas of each student sample's regressed box against its sample box."""
    out = np.zeros((len(student), 4))
    for i, s in enumerate(student.samples):
        out[i] = encode_delta(s.sample_box, s.regressed_box).as_array()
    return out
