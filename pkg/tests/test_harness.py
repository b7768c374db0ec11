import math

import numpy as np
import pytest

from dtg.geometry import Box, boxes_to_array, iou, pairwise_iou, transform_array
from dtg.harness import (
    GradCheckError,
    SceneError,
    SceneSpec,
    ambiguous_negative_scene,
    compare_paradigms,
    generate_scene,
    grad_check,
    misleading_positive_scene,
    oracle_nms,
    run_gradcheck,
)
from dtg.harness import gradcheck as gc
from dtg.harness.compare import tabulate
from dtg.labels import BACKGROUND, IGNORE, SampleLabel, TrainingLabelSet
from dtg.pipeline import RunConfig


# ---- scenes


def test_scene_is_deterministic_per_seed():
    a = generate_scene(SceneSpec(seed=3))
    b = generate_scene(SceneSpec(seed=3))
    c = generate_scene(SceneSpec(seed=4))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()


def test_scene_sizes():
    s = generate_scene(SceneSpec(seed=1, num_objects=4, samples_per_object=5, num_background=7))
    assert len(s.ground_truth) == 4
    assert len(s.teacher) == len(s.student) == 27
    assert s.teacher.sample_ids() == s.student.sample_ids()


def test_noiseless_scene_scores_objects_at_top():
    spec = SceneSpec(seed=2, box_jitter_sigma=0.0, score_noise_sigma=0.0)
    s = generate_scene(spec)
    top = s.teacher.foreground_probs().max(axis=1)
    assert int(np.sum(top == 1 - 1e-7)) == spec.num_objects * spec.samples_per_object
    # every object sample regresses exactly onto its ground-truth box
    gt = transform_array(boxes_to_array([b for b, _ in s.ground_truth]), s.teacher.transform)
    obj = s.teacher.regressed_boxes()[top == 1 - 1e-7]
    assert np.all(pairwise_iou(obj, gt).max(axis=1) > 1 - 1e-9)


def test_background_proposals_stay_clear_of_objects():
    s = generate_scene(SceneSpec(seed=5, box_jitter_sigma=0.0, score_noise_sigma=0.0))
    gt = transform_array(boxes_to_array([b for b, _ in s.ground_truth]), s.teacher.transform)
    top = s.teacher.foreground_probs().max(axis=1)
    bg = s.teacher.sample_boxes()[top < 0.5]
    assert len(bg) == 10
    assert np.all(pairwise_iou(bg, gt) < 0.3)


def test_scene_capacity_error():
    spec = SceneSpec(num_objects=1000)
    with pytest.raises(SceneError):
        generate_scene(spec)


def test_scene_spec_validation():
    with pytest.raises(SceneError):
        SceneSpec(fp_rate=1.5)
    with pytest.raises(SceneError):
        SceneSpec(box_jitter_sigma=-1.0)


def test_zero_object_scene():
    s = generate_scene(SceneSpec(num_objects=0, num_background=4))
    assert s.ground_truth == ()
    assert len(s.teacher) == 4


# ---- oracle


def test_oracle_examples():
    rows = [
        (0, (0, 0, 10, 10), 0, 0.9),
        (1, (1, 0, 11, 10), 0, 0.8),
        (2, (50, 50, 60, 60), 0, 0.7),
        (3, (0, 0, 10, 10), 1, 0.6),
    ]
    assert oracle_nms(rows, 0.5) == [0, 2, 3]
    assert oracle_nms([], 0.5) == []


def test_oracle_tie_prefers_lower_index():
    rows = [(5, (0, 0, 10, 10), 0, 0.5), (2, (0, 0, 10, 10), 0, 0.5)]
    assert oracle_nms(rows, 0.5) == [2]


# ---- gradient checker


def test_grad_check_linear_is_exact():
    assert grad_check("linear", {"x": np.array([1.0, -2.0, 3.0])}) < 1e-10


def test_grad_check_eps_validation():
    with pytest.raises(ValueError):
        grad_check("linear", {"x": np.zeros(2)}, eps=0.0)
    with pytest.raises(ValueError):
        grad_check("linear", {"x": np.zeros(2)}, eps=0.1)


def test_grad_check_non_finite_loss(monkeypatch):
    monkeypatch.setitem(gc.LOSSES, "bad", lambda x, fixed: (math.nan, np.zeros_like(x)))
    with pytest.raises(GradCheckError):
        grad_check("bad", {"x": np.zeros(2)})


def test_grad_check_detects_wrong_gradient():
    worst = run_gradcheck(instances=5, perturb_gradient=1e-2)
    assert all(v > 1e-4 for v in worst.values())


def test_run_gradcheck_is_seeded():
    assert run_gradcheck(instances=10, seed=1) == run_gradcheck(instances=10, seed=1)


# ---- paradigm comparison


def test_tabulate_buckets():
    pos0 = SampleLabel("positive", 0, Box(0, 0, 1, 1), 0)
    pos1 = SampleLabel("positive", 1, Box(0, 0, 1, 1), 0)
    base = TrainingLabelSet((pos0, BACKGROUND, IGNORE, pos0, pos0, BACKGROUND))
    dense = TrainingLabelSet((BACKGROUND, pos0, pos0, pos0, pos1, IGNORE))
    rep = tabulate(base, dense, [10, 11, 12, 13, 14, 15])
    assert rep.misleading_positive == [10]
    assert rep.ambiguous_negative == [11, 12]
    assert rep.agreement == [13]
    assert rep.other == [14, 15]
    assert rep.compared == 6 and rep.disagreements == 5


def test_compare_misleading_positive_scenario():
    s = misleading_positive_scene()
    t, r = s.teacher.samples[1].sample_box, s.teacher.samples[0].regressed_box
    assert iou(t, r) == pytest.approx(0.6)
    rep = compare_paradigms(s)
    assert rep.misleading_positive == [1]
    assert rep.ambiguous_negative == []


def test_compare_ambiguous_negative_scenario():
    s = ambiguous_negative_scene()
    assert iou(s.teacher.samples[1].sample_box, s.teacher.samples[0].regressed_box) == pytest.approx(0.4)
    rep = compare_paradigms(s)
    assert rep.ambiguous_negative == [1]
    assert rep.misleading_positive == []


def test_compare_clean_scene_agrees():
    s = generate_scene(SceneSpec(seed=7, box_jitter_sigma=0.0, score_noise_sigma=0.0))
    rep = compare_paradigms(s, RunConfig())
    assert rep.disagreements == 0
    assert rep.compared == len(s.student)
