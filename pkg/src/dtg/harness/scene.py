"""Deterministic synthetic teacher/student scenes.

Ground-truth objects live in image space. The teacher sees a weakly
augmented view and predicts a set of proposals around each object, a few
background proposals and optional confident false positives. The student
sees a differently augmented view and is fed the teacher's proposals (mapped
into its view), predicting noisier scores and boxes for the same samples.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from ..geometry import (
    AugTransform,
    Box,
    apply_transform,
    cross_space_array,
    invert,
    pairwise_iou,
    transform_array,
)
from ..prediction import DensePrediction, Stage, make_prediction

TOP_SCORE = 1.0 - 1e-7
MIN_SIDE = 1.0


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    num_objects: int = 3
    num_classes: int = 3
    view_width: float = 640.0
    view_height: float = 480.0
    box_jitter_sigma: float = 4.0
    score_noise_sigma: float = 0.05
    fp_rate: float = 0.0
    samples_per_object: int = 10
    num_background: int = 10
    student_score_sigma: float = 0.05
    student_box_sigma: float = 2.0
    min_object_size: float = 32.0
    max_object_size: float = 128.0
    background_max_iou: float = 0.3
    score_model: Literal["iou", "uniform"] = "iou"
    stage: Stage = "rcnn"
    image_id: str = "img0"

    def __post_init__(self) -> None:
        if self.num_objects < 0 or self.samples_per_object < 1 or self.num_background < 0:
            raise SceneError("object and sample counts must be non-negative")
        if self.num_classes < 1:
            raise SceneError("num_classes must be >= 1")
        for name in ("box_jitter_sigma", "score_noise_sigma", "student_score_sigma", "student_box_sigma"):
            if getattr(self, name) < 0:
                raise SceneError(f"{name} must be >= 0")
        if not 0.0 <= self.fp_rate <= 1.0:
            raise SceneError("fp_rate must lie in [0, 1]")
        if not 0 < self.min_object_size <= self.max_object_size:
            raise SceneError("object size range is empty")
        if self.view_width <= 0 or self.view_height <= 0:
            raise SceneError("view size must be positive")
        if self.stage not in ("rpn", "rcnn"):
            raise SceneError(f"unknown stage {self.stage!r}")
        if self.score_model not in ("iou", "uniform"):
            raise SceneError(f"unknown score model {self.score_model!r}")

    @property
    def capacity(self) -> int:
        cell = self.max_object_size + 2 * MIN_SIDE
        return int(self.view_width // cell) * int(self.view_height // cell)


@dataclass(frozen=True)
class Scene:
    ground_truth: tuple[tuple[Box, int], ...]
    teacher: DensePrediction
    student: DensePrediction

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(scene_to_dict(self), sort_keys=True).encode()).hexdigest()


def scene_to_dict(scene: Scene) -> dict:
    from ..io import prediction_to_record

    return {
        "ground_truth": [{"box": b.to_list(), "category": c} for b, c in scene.ground_truth],
        "teacher": prediction_to_record(scene.teacher),
        "student": prediction_to_record(scene.student),
    }


def _jitter(rng: np.random.Generator, boxes: np.ndarray, sigma: float) -> np.ndarray:
    if sigma == 0.0 or len(boxes) == 0:
        return boxes.copy()
    out = boxes + rng.normal(0.0, sigma, size=boxes.shape)
    return _repair(out)


def _repair(boxes: np.ndarray) -> np.ndarray:
    x1 = np.minimum(boxes[:, 0], boxes[:, 2])
    x2 = np.maximum(boxes[:, 0], boxes[:, 2])
    y1 = np.minimum(boxes[:, 1], boxes[:, 3])
    y2 = np.maximum(boxes[:, 1], boxes[:, 3])
    x2 = np.maximum(x2, x1 + MIN_SIDE)
    y2 = np.maximum(y2, y1 + MIN_SIDE)
    return np.stack([x1, y1, x2, y2], axis=1)


def _place_objects(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    cell = spec.max_object_size + 2 * MIN_SIDE
    cols, rows = int(spec.view_width // cell), int(spec.view_height // cell)
    if spec.num_objects > cols * rows:
        raise SceneError(
            f"{spec.num_objects} objects do not fit; capacity is {cols * rows} for this view"
        )
    if spec.num_objects == 0:
        return np.zeros((0, 4))
    cells = rng.choice(cols * rows, size=spec.num_objects, replace=False)
    out = np.zeros((spec.num_objects, 4))
    for k, c in enumerate(cells):
        cx, cy = (c % cols) * cell, (c // cols) * cell
        w, h = rng.uniform(spec.min_object_size, spec.max_object_size, size=2)
        x = cx + MIN_SIDE + rng.uniform(0.0, spec.max_object_size - w)
        y = cy + MIN_SIDE + rng.uniform(0.0, spec.max_object_size - h)
        out[k] = (x, y, x + w, y + h)
    return out


def _far_boxes(rng, spec: SceneSpec, gt: np.ndarray, n: int, bounds) -> np.ndarray:
    """Random boxes whose IoU with every ground-truth box is below background_max_iou."""
    W, H = bounds
    out = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 1000 * (n + 1):
            raise SceneError("could not place background proposals; view too crowded")
        w, h = rng.uniform(spec.min_object_size, spec.max_object_size, size=2)
        w, h = min(w, W), min(h, H)
        x, y = rng.uniform(0.0, W - w), rng.uniform(0.0, H - h)
        b = np.array([[x, y, x + w, y + h]])
        if len(gt) == 0 or pairwise_iou(b, gt).max() < spec.background_max_iou:
            out.append(b[0])
    return np.array(out).reshape(-1, 4)


def _views(rng: np.random.Generator, spec: SceneSpec) -> tuple[AugTransform, AugTransform]:
    W, H = spec.view_width, spec.view_height
    teacher = AugTransform(bool(rng.random() < 0.5), float(rng.uniform(0.8, 1.25)), 0.0, 0.0, W, H)
    student = AugTransform(
        bool(rng.random() < 0.5),
        float(rng.uniform(0.5, 1.5)),
        float(rng.uniform(-20.0, 20.0)),
        float(rng.uniform(-20.0, 20.0)),
        W,
        H,
    )
    return teacher, student


def _probs(scores: np.ndarray, cats: np.ndarray, spec: SceneSpec) -> np.ndarray:
    if spec.stage == "rpn":
        return scores.reshape(-1, 1).copy()
    out = np.zeros((len(scores), spec.num_classes + 1))
    out[np.arange(len(scores)), cats] = scores
    out[:, -1] = 1.0 - scores
    return out


def _student_probs(rng, teacher_probs: np.ndarray, spec: SceneSpec) -> np.ndarray:
    if spec.stage == "rpn":
        fg = teacher_probs
    else:
        fg = teacher_probs[:, :-1]
    if spec.student_score_sigma > 0.0 and fg.size:
        fg = fg + rng.normal(0.0, spec.student_score_sigma, size=fg.shape)
    fg = np.clip(fg, 1e-4, 1.0 - 1e-4)
    if spec.stage == "rpn":
        return fg
    total = fg.sum(axis=1, keepdims=True)
    fg = np.where(total > 0.999, fg * (0.999 / total), fg)
    return np.concatenate([fg, 1.0 - fg.sum(axis=1, keepdims=True)], axis=1)


def generate_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    gt = _place_objects(rng, spec)
    gt_cats = rng.integers(0, spec.num_classes, size=len(gt))
    teacher_t, student_t = _views(rng, spec)
    gt_t = transform_array(gt, teacher_t)
    tw, th = teacher_t.output_size

    per = spec.samples_per_object
    obj_src = np.repeat(np.arange(len(gt)), per)
    obj_gt = gt_t[obj_src]
    obj_prop = _jitter(rng, obj_gt, 2.0 * spec.box_jitter_sigma)
    obj_reg = _jitter(rng, obj_gt, spec.box_jitter_sigma)
    obj_cat = gt_cats[obj_src]

    bg_prop = _far_boxes(rng, spec, gt_t, spec.num_background, (tw, th))
    bg_reg = bg_prop.copy()

    n_fp = int(round(spec.fp_rate * (len(obj_prop) + len(bg_prop))))
    fp_prop = _far_boxes(rng, spec, gt_t, n_fp, (tw, th))
    fp_reg = _jitter(rng, fp_prop, spec.box_jitter_sigma)

    def quality(reg, ref):
        if len(reg) == 0:
            return np.zeros(0)
        if len(ref) == 0:
            return np.zeros(len(reg))
        return pairwise_iou(reg, ref).max(axis=1)

    if spec.score_model == "iou":
        obj_score = np.array([pairwise_iou(r[None], g[None])[0, 0] for r, g in zip(obj_reg, obj_gt)])
    else:
        obj_score = rng.uniform(0.5, 1.0, size=len(obj_reg))
    bg_score = quality(bg_reg, gt_t)
    fp_score = rng.uniform(0.5, 1.0, size=n_fp)
    scores = np.concatenate([obj_score, bg_score, fp_score])
    if spec.score_noise_sigma > 0.0 and scores.size:
        scores = scores + rng.normal(0.0, spec.score_noise_sigma, size=scores.shape)
    scores = np.clip(scores, 0.0, TOP_SCORE)

    if len(gt_t):
        bg_cat = gt_cats[np.argmax(pairwise_iou(bg_reg, gt_t), axis=1)] if len(bg_reg) else np.zeros(0, int)
    else:
        bg_cat = rng.integers(0, spec.num_classes, size=len(bg_reg))
    fp_cat = rng.integers(0, spec.num_classes, size=n_fp)
    cats = np.concatenate([obj_cat, bg_cat, fp_cat]).astype(int)

    props = np.concatenate([obj_prop, bg_prop, fp_prop]).reshape(-1, 4)
    regs = np.concatenate([obj_reg, bg_reg, fp_reg]).reshape(-1, 4)
    order = rng.permutation(len(props))
    props, regs, scores, cats = props[order], regs[order], scores[order], cats[order]

    t_probs = _probs(scores, cats, spec)
    teacher = make_prediction(spec.image_id, spec.stage, teacher_t, props, t_probs, regs)

    s_props = cross_space_array(props, teacher_t, student_t)
    s_regs = _jitter(rng, cross_space_array(regs, teacher_t, student_t), spec.student_box_sigma)
    s_probs = _student_probs(rng, t_probs, spec)
    student = make_prediction(spec.image_id, spec.stage, student_t, s_props, s_probs, s_regs)

    truth = tuple((Box.from_seq(b), int(c)) for b, c in zip(gt, gt_cats))
    return Scene(truth, teacher, student)


def _constructed(samples, teacher_t, student_t, image_id) -> Scene:
    """Scene from explicit teacher samples ``(proposal, regressed, score)``, all class 0."""
    props = np.array([s[0] for s in samples], dtype=np.float64)
    regs = np.array([s[1] for s in samples], dtype=np.float64)
    scores = np.array([s[2] for s in samples])
    probs = np.stack([scores, 1.0 - scores], axis=1)
    teacher = make_prediction(image_id, "rcnn", teacher_t, props, probs, regs)
    s_props = cross_space_array(props, teacher_t, student_t)
    student = make_prediction(
        image_id, "rcnn", student_t, s_props, probs, cross_space_array(regs, teacher_t, student_t)
    )
    gt = apply_transform(Box.from_seq(samples[0][1]), invert(teacher_t))
    return Scene(((gt, 0),), teacher, student)


_CASE_TEACHER = AugTransform(True, 1.0, 0.0, 0.0, 400.0, 400.0)
_CASE_STUDENT = AugTransform(False, 1.5, 10.0, -5.0, 400.0, 400.0)
_CASE_OBJECT = [100.0, 100.0, 200.0, 200.0]


def misleading_positive_scene() -> Scene:
    """A poorly localised proposal: IoU 0.6 with the pseudo box, teacher score 0.3.

    Sample 0 is the confident reserved detection, sample 1 the poorly
    localised proposal, sample 2 a clear background proposal.
    """
    return _constructed(
        [
            (_CASE_OBJECT, _CASE_OBJECT, 0.95),
            ([100.0, 100.0, 200.0, 160.0], [100.0, 100.0, 200.0, 160.0], 0.3),
            ([300.0, 300.0, 360.0, 360.0], [300.0, 300.0, 360.0, 360.0], 0.02),
        ],
        _CASE_TEACHER,
        _CASE_STUDENT,
        "misleading-positive",
    )


def ambiguous_negative_scene() -> Scene:
    """A proposal covering part of the object (IoU 0.4) whose regressed box joins the cluster.

    The teacher scores it 0.6, above the R-CNN threshold, and regresses it to
    IoU 0.9 with the reserved box, so NMS groups it with the object.
    """
    return _constructed(
        [
            (_CASE_OBJECT, _CASE_OBJECT, 0.95),
            ([100.0, 100.0, 140.0, 200.0], [100.0, 100.0, 190.0, 200.0], 0.6),
            ([300.0, 300.0, 360.0, 360.0], [300.0, 300.0, 360.0, 360.0], 0.02),
        ],
        _CASE_TEACHER,
        _CASE_STUDENT,
        "ambiguous-negative",
    )


def spec_to_dict(spec: SceneSpec) -> dict:
    return asdict(spec)
