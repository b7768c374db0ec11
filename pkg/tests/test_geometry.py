import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtg.geometry import (
    AugTransform,
    Box,
    apply_transform,
    cross_space,
    invert,
    iou,
    pairwise_iou,
)

coord = st.floats(min_value=-500, max_value=500, allow_nan=False, allow_infinity=False)
side = st.floats(min_value=0.0, max_value=300, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw, min_side=0.0):
    x, y = draw(coord), draw(coord)
    w = draw(st.floats(min_value=min_side, max_value=300))
    h = draw(st.floats(min_value=min_side, max_value=300))
    return Box(x, y, x + w, y + h)


@st.composite
def transforms(draw):
    return AugTransform(
        draw(st.booleans()),
        draw(st.floats(min_value=0.25, max_value=4.0)),
        draw(st.floats(min_value=-100, max_value=100)),
        draw(st.floats(min_value=-100, max_value=100)),
        draw(st.floats(min_value=10, max_value=2000)),
        draw(st.floats(min_value=10, max_value=2000)),
    )


def close(a: Box, b: Box, tol=1e-9):
    return all(abs(p - q) <= tol for p, q in zip(a, b))


def test_box_rejects_inverted_corners():
    with pytest.raises(ValueError):
        Box(10, 0, 0, 10)
    with pytest.raises(ValueError):
        Box(0, 0, math.nan, 1)


def test_iou_examples():
    a = Box(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, Box(20, 20, 30, 30)) == 0.0
    # intersection 50, union 150
    assert iou(a, Box(5, 0, 15, 10)) == pytest.approx(1 / 3, abs=1e-15)


def test_iou_degenerate_identical_is_zero():
    z = Box(3, 3, 3, 3)
    assert iou(z, z) == 0.0


def test_iou_touching_edges_is_zero():
    assert iou(Box(0, 0, 10, 10), Box(10, 0, 20, 10)) == 0.0


def test_pairwise_iou_matches_scalar():
    rng = np.random.default_rng(3)
    xy = rng.uniform(0, 100, size=(30, 2))
    wh = rng.uniform(0, 40, size=(30, 2))
    arr = np.concatenate([xy, xy + wh], axis=1)
    m = pairwise_iou(arr, arr)
    for i in range(30):
        for j in range(30):
            assert m[i, j] == pytest.approx(iou(Box.from_seq(arr[i]), Box.from_seq(arr[j])), abs=1e-15)


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes(min_side=1.0), boxes(min_side=1.0), transforms())
def test_iou_invariant_under_shared_transform(a, b, t):
    assert iou(apply_transform(a, t), apply_transform(b, t)) == pytest.approx(iou(a, b), abs=1e-9)


def test_apply_transform_examples():
    b = Box(10, 0, 20, 10)
    assert apply_transform(b, AugTransform.identity(100, 100)) == b
    assert apply_transform(b, AugTransform(True, 1.0, 0, 0, 100, 100)) == Box(80, 0, 90, 10)
    assert apply_transform(Box(1, 1, 3, 3), AugTransform(False, 2.0, 0, 0, 10, 10)) == Box(2, 2, 6, 6)


def test_invert_examples():
    ident = AugTransform.identity(100, 50)
    assert invert(ident) == ident
    assert invert(AugTransform(False, 2.0, 0, 0, 10, 10)).scale == 0.5


def test_invert_roundtrip_fuzz():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        t = AugTransform(
            bool(rng.random() < 0.5),
            float(rng.uniform(0.3, 3.0)),
            float(rng.uniform(-50, 50)),
            float(rng.uniform(-50, 50)),
            float(rng.uniform(50, 1500)),
            float(rng.uniform(50, 1500)),
        )
        x, y = rng.uniform(0, 1000, size=2)
        w, h = rng.uniform(0, 300, size=2)
        b = Box(x, y, x + w, y + h)
        back = apply_transform(apply_transform(b, t), invert(t))
        worst = max(worst, max(abs(p - q) for p, q in zip(b, back)))
    assert worst < 1e-9


def test_cross_space_examples():
    b = Box(10, 0, 20, 10)
    s = AugTransform(True, 1.3, 4.0, -2.0, 100, 80)
    assert cross_space(b, s, s) == b
    flip = AugTransform(True, 1.0, 0, 0, 100, 100)
    assert cross_space(b, AugTransform.identity(100, 100), flip) == Box(80, 0, 90, 10)


@given(boxes(), transforms(), transforms())
@settings(max_examples=300)
def test_cross_space_group_property(b, s1, s2):
    there = cross_space(b, s1, s2)
    assert close(cross_space(there, s2, s1), b)
    direct = apply_transform(apply_transform(b, invert(s1)), s2)
    assert close(there, direct)
