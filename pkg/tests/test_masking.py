import math

import numpy as np
import pytest

from owpkit.assignment import FpnLevelSpec, assign_targets, make_grids
from owpkit.geometry import BoxXYXY
from owpkit.masking import (
    DEFAULT_MASK_START,
    DEFAULT_MASK_THRESHOLD,
    MASK_START_ITERATIONS,
    MASK_THRESHOLDS,
    masking_schedule,
    unknown_area_mask,
    unknown_object_mask,
)

S8 = [FpnLevelSpec(8, 0, math.inf)]


def test_defaults():
    assert MASK_THRESHOLDS == (0.925, 0.95) and DEFAULT_MASK_THRESHOLD == 0.95
    assert MASK_START_ITERATIONS == (5000, 10000, 30000, 60000) and DEFAULT_MASK_START == 5000


def test_pixel_mask_examples():
    grids = make_grids(48, 48, S8)
    res = assign_targets([BoxXYXY(0, 0, 16, 16)], S8, grids)
    obj = np.zeros((6, 6))
    obj[0, 0] = 0.99  # foreground
    obj[3, 3] = 0.96
    obj[4, 4] = 0.2
    m = unknown_object_mask([obj], res, 0.95).excluded[0]
    assert res.levels[0].foreground[0, 0] and not m[0, 0]
    assert m[3, 3] and not m[4, 4]
    assert m.sum() == 1
    with pytest.raises(ValueError):
        unknown_object_mask([obj[:2]], res)


def test_area_mask_examples():
    grids = make_grids(48, 48, S8)
    res = assign_targets([], S8, grids)
    obj = np.zeros((6, 6))
    reg = np.zeros((6, 6, 4))
    assert unknown_area_mask([obj], [reg], res).count() == 0
    obj[2, 2] = 0.99  # location (20, 20)
    reg[2, 2] = 10.0  # box (10, 10, 30, 30)
    m = unknown_area_mask([obj], [reg], res, 0.95).excluded[0]
    xs, ys = grids[0].xs, grids[0].ys
    expect = (xs >= 10) & (xs <= 30) & (ys >= 10) & (ys <= 30)
    np.testing.assert_array_equal(m, expect)  # points 12, 20, 28 on each axis
    assert m.sum() == 9


def test_degenerate_trigger_keeps_own_location():
    grids = make_grids(48, 48, S8)
    res = assign_targets([], S8, grids)
    obj = np.zeros((6, 6))
    obj[1, 1] = 0.99
    reg = np.zeros((6, 6, 4))
    m = unknown_area_mask([obj], [reg], res, 0.95).excluded[0]
    assert m[1, 1] and m.sum() == 1


def test_area_nms_reduces_or_keeps():
    grids = make_grids(64, 64, S8)
    res = assign_targets([], S8, grids)
    obj = np.zeros((8, 8))
    reg = np.zeros((8, 8, 4))
    obj[2, 2], obj[2, 3] = 0.99, 0.98
    reg[2, 2] = 12.0
    reg[2, 3] = [20.0, 4.0, 12.0, 12.0]  # same box as the first trigger
    full = unknown_area_mask([obj], [reg], res, 0.95)
    sup = unknown_area_mask([obj], [reg], res, 0.95, nms_iou=0.5)
    assert sup.issubset(full) and unknown_object_mask([obj], res, 0.95).issubset(sup)


def random_instance(rng):
    levels = [FpnLevelSpec(8, 0, 48), FpnLevelSpec(16, 48, math.inf)]
    h, w = (int(v) * 8 for v in rng.integers(2, 16, 2))
    grids = make_grids(h, w, levels)
    n = int(rng.integers(0, 5))
    xy = rng.uniform(0, [w, h], (n, 2))
    wh = rng.uniform(4, 80, (n, 2))
    res = assign_targets(np.hstack([xy, xy + wh]), levels, grids)
    obj = [rng.random(g.xs.shape) ** 0.3 for g in grids]
    reg = [rng.uniform(0, 40, g.xs.shape + (4,)) * (rng.random(g.xs.shape + (1,)) > 0.1) for g in grids]
    return res, obj, reg


def test_randomized_properties(rng):
    for _ in range(100):
        res, obj, reg = random_instance(rng)
        prev_p = prev_a = None
        for thr in (0.5, 0.8, 0.925, 0.95, 0.99):
            p = unknown_object_mask(obj, res, thr)
            a = unknown_area_mask(obj, reg, res, thr)
            assert p.issubset(a)
            for m, lv in zip(a.excluded, res.levels):
                assert not (m & lv.foreground).any()
            if prev_p is not None:
                assert p.issubset(prev_p) and a.issubset(prev_a)
            prev_p, prev_a = p, a


def test_schedule():
    assert not masking_schedule(4999, 5000)
    assert masking_schedule(5000, 5000)
    assert masking_schedule(0, 0) and masking_schedule(10**6, 0)
    with pytest.raises(ValueError):
        masking_schedule(-1)
