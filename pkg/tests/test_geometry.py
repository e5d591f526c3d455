import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from owpkit.geometry import (
    BoxXYXY,
    GeometryError,
    Ltrb,
    box_to_ltrb,
    centerness_array,
    centerness_target,
    iou_ltrb,
    iou_ltrb_array,
    iou_xyxy,
    ltrb_to_box,
    pairwise_iou,
)

dist = st.floats(min_value=0.01, max_value=1e3, allow_nan=False)
ltrbs = st.builds(Ltrb, dist, dist, dist, dist)


@pytest.mark.parametrize(
    "d, expected",
    [
        (Ltrb(5, 5, 5, 5), 1.0),
        (Ltrb(0, 8, 4, 4), 0.0),
        (Ltrb(1, 4, 2, 2), 0.5),  # sqrt(1/4 * 1)
    ],
)
def test_centerness_examples(d, expected):
    assert centerness_target(d) == pytest.approx(expected, abs=1e-9)


def test_centerness_degenerate():
    with pytest.raises(GeometryError):
        centerness_target(Ltrb(0, 0, 1, 1))


@pytest.mark.parametrize(
    "pred, target, expected",
    [
        (Ltrb(3, 1, 2, 5), Ltrb(3, 1, 2, 5), 1.0),
        (Ltrb(1, 1, 1, 1), Ltrb(2, 2, 2, 2), 0.25),  # I=4, U=16
        (Ltrb(2, 2, 2, 2), Ltrb(2, 2, 1, 1), 0.5),  # I=8, U=16
    ],
)
def test_iou_ltrb_examples(pred, target, expected):
    assert iou_ltrb(pred, target) == pytest.approx(expected, abs=1e-9)


def test_iou_xyxy_examples():
    a = BoxXYXY(0, 0, 2, 2)
    assert iou_xyxy(a, a) == 1.0
    assert iou_xyxy(a, BoxXYXY(5, 5, 6, 6)) == 0.0
    assert iou_xyxy(a, BoxXYXY(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-12)


def test_ltrb_box_conversions():
    assert ltrb_to_box(5, 5, Ltrb(1, 1, 1, 1)).as_tuple() == (4, 4, 6, 6)
    assert ltrb_to_box(10, 4, Ltrb(2, 6, 1, 3)).as_tuple() == (8, 3, 16, 7)
    box = BoxXYXY(0, 0, 10, 10)
    assert box_to_ltrb(5, 5, box) == Ltrb(5, 5, 5, 5)
    assert box_to_ltrb(2, 3, box) == Ltrb(2, 8, 3, 7)
    assert box_to_ltrb(0, 5, box) is None
    assert box_to_ltrb(11, 5, box) is None


def test_ltrb_to_box_degenerate():
    with pytest.raises(GeometryError):
        ltrb_to_box(1, 1, Ltrb(0, 0, 1, 1))


def test_type_invariants():
    with pytest.raises(GeometryError):
        BoxXYXY(1, 0, 1, 2)
    with pytest.raises(GeometryError):
        BoxXYXY(0, 0, math.inf, 2)
    with pytest.raises(GeometryError):
        Ltrb(-1, 0, 0, 0)


@given(ltrbs)
def test_centerness_range_and_symmetry(d):
    c = centerness_target(d)
    assert 0 <= c <= 1
    assert c == pytest.approx(centerness_target(Ltrb(d.r, d.l, d.b, d.t)), abs=1e-12)


@given(ltrbs, st.floats(min_value=0.01, max_value=100))
def test_centerness_and_iou_scale_invariant(d, k):
    scaled = Ltrb(d.l * k, d.r * k, d.t * k, d.b * k)
    assert centerness_target(scaled) == pytest.approx(centerness_target(d), abs=1e-9)
    other = Ltrb(d.r, d.l, d.t, d.b)
    other_scaled = Ltrb(other.l * k, other.r * k, other.t * k, other.b * k)
    assert iou_ltrb(scaled, other_scaled) == pytest.approx(iou_ltrb(d, other), abs=1e-9)


@given(ltrbs, ltrbs)
def test_iou_ltrb_symmetric(p, t):
    assert iou_ltrb(p, t) == pytest.approx(iou_ltrb(t, p), abs=1e-12)


@settings(max_examples=300)
@given(ltrbs, ltrbs, st.floats(-100, 100), st.floats(-100, 100))
def test_iou_paths_agree(p, t, x, y):
    direct = iou_ltrb(p, t)
    decoded = iou_xyxy(ltrb_to_box(x, y, p), ltrb_to_box(x, y, t))
    assert abs(direct - decoded) <= 1e-9


@given(st.floats(0, 100), st.floats(0, 100), st.floats(1, 50), st.floats(1, 50),
       st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_round_trip(x1, y1, w, h, fx, fy):
    box = BoxXYXY(x1, y1, x1 + w, y1 + h)
    x, y = x1 + fx * w, y1 + fy * h
    d = box_to_ltrb(x, y, box)
    assert d is not None
    back = ltrb_to_box(x, y, d)
    np.testing.assert_allclose(back.as_tuple(), box.as_tuple(), atol=1e-9)


def test_vectorised_forms_match_scalar(rng):
    p = rng.uniform(0.1, 50, (500, 4))
    t = rng.uniform(0.1, 50, (500, 4))
    vec = iou_ltrb_array(p, t)
    ref = [iou_ltrb(Ltrb(*a), Ltrb(*b)) for a, b in zip(p, t)]
    np.testing.assert_allclose(vec, ref, atol=1e-12)
    np.testing.assert_allclose(centerness_array(t), [centerness_target(Ltrb(*b)) for b in t], atol=1e-12)
    boxes = np.concatenate([rng.uniform(0, 50, (40, 2)), rng.uniform(0, 50, (40, 2))], 1)
    boxes[:, 2:] += boxes[:, :2] + 1
    m = pairwise_iou(boxes[:20], boxes[20:])
    for i in range(20):
        for j in range(20):
            assert m[i, j] == pytest.approx(iou_xyxy(BoxXYXY(*boxes[i]), BoxXYXY(*boxes[20 + j])), abs=1e-12)
