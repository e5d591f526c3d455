import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from owpkit.assignment import FpnLevelSpec, assign_targets, make_grids
from owpkit.geometry import BoxXYXY
from owpkit.sampling import (
    SamplingMode,
    build_objectness_training_set,
    iou_sampling,
    sample_balance_stats,
)

LEVEL = [FpnLevelSpec(1, 0, math.inf)]


def one_box(h=12, w=12, box=(1, 1, 11, 11)):
    grids = make_grids(h, w, LEVEL)
    return assign_targets([BoxXYXY(*box)], LEVEL, grids, 1.5)


def test_iou_sampling_examples():
    res = one_box()
    t = np.zeros((12, 12))
    t[5, 5], t[5, 6], t[6, 5] = 0.2, 0.95, 0.3
    t[0, 0] = 0.2  # background: untouched
    out = iou_sampling([t], res)[0]
    assert out[5, 5] == 0.0 and out[5, 6] == 0.95 and out[6, 5] == 0.3
    assert out[0, 0] == 0.2
    with pytest.raises(ValueError):
        iou_sampling([t], res, threshold=1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_iou_sampling_idempotent_and_monotone(seed, thr):
    rng = np.random.default_rng(seed)
    res = one_box(16, 16, (2, 3, 14, 12))
    t = rng.random((16, 16))
    once = iou_sampling([t], res, thr)[0]
    twice = iou_sampling([once], res, thr)[0]
    np.testing.assert_array_equal(once, twice)
    assert (once <= t).all()
    keep = t >= thr
    np.testing.assert_array_equal(once[keep], t[keep])
    fg = res.levels[0].foreground
    assert not ((once > 0) & (once < thr) & fg).any()


def test_training_set_modes():
    grids = make_grids(2, 2, LEVEL)
    empty = assign_targets([], LEVEL, grids)
    t = [np.full((2, 2), 0.7)]
    assert len(build_objectness_training_set(empty, t, SamplingMode.ALL)) == 4
    assert (build_objectness_training_set(empty, t, SamplingMode.ALL).target == 0).all()
    assert len(build_objectness_training_set(empty, t, SamplingMode.FCOS_DEFAULT)) == 0

    res = one_box()
    tgt = np.zeros((12, 12))
    tgt[6, 6] = 0.1  # centre of the box, so center sampled
    assert res.levels[0].center_sampled[6, 6]
    cs = build_objectness_training_set(res, [tgt], SamplingMode.CS_IS)
    i = np.nonzero((cs.row == 6) & (cs.col == 6))[0]
    assert i.size == 1 and cs.target[i[0]] == 0.0
    raw = build_objectness_training_set(res, [tgt], SamplingMode.FCOS_DEFAULT)
    assert raw.target[np.nonzero((raw.row == 6) & (raw.col == 6))[0][0]] == 0.1
    with pytest.raises(ValueError):
        build_objectness_training_set(res, [tgt[:3]], SamplingMode.ALL)


def test_mode_parse():
    assert SamplingMode.parse("cs-is") is SamplingMode.CS_IS
    assert SamplingMode.parse("ALL") is SamplingMode.ALL
    with pytest.raises(ValueError):
        SamplingMode.parse("ohem")


def test_mode_invariants(rng):
    levels = [FpnLevelSpec(4, 0, 32), FpnLevelSpec(8, 32, math.inf)]
    for _ in range(20):
        grids = make_grids(64, 80, levels)
        boxes = [(x, y, x + w, y + h) for x, y, w, h in
                 zip(rng.uniform(0, 60, 4), rng.uniform(0, 50, 4), rng.uniform(4, 60, 4), rng.uniform(4, 60, 4))]
        res = assign_targets(boxes, levels, grids)
        targets = [rng.random(g.xs.shape) for g in grids]
        a = build_objectness_training_set(res, targets, SamplingMode.ALL)
        d = build_objectness_training_set(res, targets, SamplingMode.FCOS_DEFAULT)
        c = build_objectness_training_set(res, targets, SamplingMode.CS_IS)
        assert len(a) == res.location_count()
        assert len(d) == len(c) == res.center_sampled_count()
        assert sample_balance_stats(a).negatives >= sample_balance_stats(d).negatives
        assert not ((c.target > 0) & (c.target < 0.3)).any()
        assert ((0 <= c.target) & (c.target <= 1)).all()


def test_balance_stats():
    s = sample_balance_stats(np.array([0.9, 0.8, 0.1, 0.0]))
    assert (s.positives, s.negatives, s.ratio) == (2, 2, 1.0)
    assert sample_balance_stats(np.ones(3)).ratio == math.inf
    e = sample_balance_stats(np.zeros(0))
    assert (e.positives, e.negatives, e.ratio) == (0, 0, 0.0)
    assert sample_balance_stats(np.array([0.5])).negatives == 1
    with pytest.raises(ValueError):
        sample_balance_stats(np.ones(2), positive_cut=0)
