import math

import numpy as np
import pytest

from dtg.correspondence import CorrespondenceError, CorrespondenceMap, match_rcnn
from dtg.geometry import AugTransform, Box, cross_space
from dtg.labels import (
    RegressionDelta,
    decode_delta,
    derive_labels,
    encode_delta,
    sparse_to_dense_assign,
)
from dtg.nms import Candidate, clustered_nms


def identity_map(n):
    return CorrespondenceMap(tuple((i, i) for i in range(n)))


def test_encode_identity_is_zero():
    b = Box(3, 4, 13, 24)
    assert encode_delta(b, b) == RegressionDelta(0.0, 0.0, 0.0, 0.0)


def test_encode_center_size_example():
    d = encode_delta(Box(0, 0, 10, 10), Box(0, 0, 20, 20))
    assert (d.dx, d.dy) == (0.5, 0.5)
    assert d.dw == pytest.approx(math.log(2), abs=1e-15)
    assert d.dh == pytest.approx(math.log(2), abs=1e-15)


def test_encode_rejects_zero_area():
    with pytest.raises(ValueError):
        encode_delta(Box(0, 0, 10, 10), Box(5, 5, 5, 9))
    with pytest.raises(ValueError):
        encode_delta(Box(0, 0, 0, 10), Box(0, 0, 5, 9))


def test_encode_decode_roundtrip_fuzz():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(1000):
        s_xy, t_xy = rng.uniform(-200, 800, size=(2, 2))
        s_wh, t_wh = rng.uniform(0.5, 400, size=(2, 2))
        s = Box(*s_xy, *(s_xy + s_wh))
        t = Box(*t_xy, *(t_xy + t_wh))
        back = decode_delta(encode_delta(s, t), s)
        worst = max(worst, max(abs(p - q) for p, q in zip(back, t)))
    assert worst < 1e-6


def cand(i, sample, box, score, cat=0):
    return Candidate(i, sample, Box(*box), cat, score)


def test_derive_singleton_cluster():
    cs = clustered_nms([cand(0, 0, (0, 0, 10, 10), 0.9)], 0.5, inactive=(1, 2))
    labels = derive_labels(cs, identity_map(3), 3)
    assert labels[0].kind == "positive"
    assert labels[0].category == 0 and labels[0].target == Box(0, 0, 10, 10) and labels[0].cluster == 0
    assert labels.kinds()[1:] == ["background", "background"]


def test_derive_empty_clusters():
    cs = clustered_nms([], 0.5, inactive=(0, 1))
    cm = CorrespondenceMap(((0, 0), (1, 1)))
    labels = derive_labels(cs, cm, 3)
    assert labels.kinds() == ["background", "background", "ignore"]


def test_derive_targets_reserved_box_in_student_space():
    t = AugTransform(True, 1.0, 0, 0, 100, 100)
    s = AugTransform(False, 2.0, 3, 1, 100, 100)
    cs = clustered_nms([cand(0, 0, (0, 0, 10, 10), 0.9), cand(1, 1, (1, 0, 11, 10), 0.8)], 0.5)
    labels = derive_labels(cs, identity_map(2), 2, t, s)
    expected = cross_space(Box(0, 0, 10, 10), t, s)
    assert labels[0].target == expected and labels[1].target == expected
    assert labels[0].cluster == labels[1].cluster == 0


def test_derive_all_boxes_mode():
    cs = clustered_nms([cand(0, 0, (0, 0, 10, 10), 0.9), cand(1, 1, (1, 0, 11, 10), 0.8)], 0.5)
    labels = derive_labels(cs, identity_map(2), 2, regression_target="all")
    assert labels[1].target == Box(1, 0, 11, 10)


def test_derive_unmatched_teacher_partner_is_ignored():
    cs = clustered_nms([cand(0, 0, (0, 0, 10, 10), 0.9)], 0.5, inactive=(1,))
    cm = CorrespondenceMap(((0, 2),), unmatched_teacher=(1,))
    labels = derive_labels(cs, cm, 3)
    assert labels.kinds() == ["ignore", "ignore", "positive"]


def test_derive_missing_coverage_is_error():
    cs = clustered_nms([cand(0, 0, (0, 0, 10, 10), 0.9)], 0.5, inactive=(1,))
    with pytest.raises(CorrespondenceError):
        derive_labels(cs, CorrespondenceMap(((0, 0),)), 2)


def test_derive_sample_in_two_class_clusters_takes_higher_cluster():
    # sample 0 is reserved for class 1 (0.7) and class 0 (0.6); class 1 cluster comes first
    cs = clustered_nms(
        [cand(0, 0, (0, 0, 10, 10), 0.6, 0), cand(1, 0, (0, 0, 10, 10), 0.7, 1)], 0.5
    )
    labels = derive_labels(cs, identity_map(1), 1)
    assert labels[0].category == 1 and labels[0].cluster == 0


def test_cluster_label_consistency():
    rng = np.random.default_rng(8)
    cands = []
    for i in range(40):
        x, y = rng.uniform(0, 60, size=2)
        cands.append(cand(i, i, (x, y, x + 30, y + 30), float(rng.uniform(0.5, 1)), int(rng.integers(0, 2))))
    cs = clustered_nms(cands, 0.5)
    labels = derive_labels(cs, identity_map(40), 40)
    for members in labels.positives_by_cluster().values():
        assert len({(labels[i].category, labels[i].target) for i in members}) == 1


def test_sparse_no_pseudo_boxes_all_background():
    labels = sparse_to_dense_assign([(Box(0, 0, 10, 10), 0, 0.5)], 0.9, [Box(0, 0, 10, 10)] * 3)
    assert labels.kinds() == ["background"] * 3


def test_sparse_iou_point_six_is_positive():
    pseudo = [(Box(0, 0, 100, 100), 2, 0.95)]
    labels = sparse_to_dense_assign(pseudo, 0.9, [Box(0, 0, 100, 60)], 0.5, 0.5)
    assert labels[0].kind == "positive" and labels[0].category == 2


def test_sparse_ignore_band():
    pseudo = [(Box(0, 0, 100, 100), 0, 0.95)]
    samples = [Box(0, 0, 100, 45), Box(0, 0, 100, 30), Box(0, 0, 100, 60)]
    labels = sparse_to_dense_assign(pseudo, 0.9, samples, pos_iou=0.5, neg_iou=0.4)
    assert labels.kinds() == ["ignore", "background", "positive"]


def test_sparse_rejects_inverted_band():
    with pytest.raises(ValueError):
        sparse_to_dense_assign([], 0.9, [], pos_iou=0.3, neg_iou=0.5)


def test_perfect_teacher_matches_gt_assignment_small():
    # two well separated objects, noiseless duplicates, plus clear background proposals
    gt = [(Box(0, 0, 50, 50), 0), (Box(200, 200, 260, 280), 1)]
    cands, inactive, students = [], [], []
    for k in range(6):
        b, c = gt[k % 2]
        cands.append(Candidate(len(cands), len(students), b, c, 1 - 1e-7))
        students.append(b)
    for b in (Box(100, 0, 140, 40), Box(300, 300, 330, 330)):
        inactive.append(len(students))
        students.append(b)
    cs = clustered_nms(cands, 0.5, inactive)
    inc = derive_labels(cs, match_rcnn(students, len(students)), len(students))
    base = sparse_to_dense_assign([(b, c, 1.0) for b, c in gt], 0.9, students)
    assert inc.kinds() == base.kinds()
    assert [l.category for l in inc.labels] == [l.category for l in base.labels]
