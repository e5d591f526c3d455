"""
Dense targets for one image
===========================

Assign every pyramid location a box, then build the objectness
training set three ways and compare how balanced each one is.
"""

import numpy as np

from owpkit.assignment import assign_targets, compute_iou_targets, default_levels, make_grids
from owpkit.geometry import BoxXYXY
from owpkit.sampling import SamplingMode, build_objectness_training_set, sample_balance_stats

# a 256x320 image with a large box and a small one nested inside it
boxes = [BoxXYXY(20, 30, 220, 230), BoxXYXY(90, 100, 130, 140), BoxXYXY(240, 10, 300, 90)]
levels = default_levels()
grids = make_grids(256, 320, levels)
result = assign_targets(boxes, levels, grids)

for lv in result.levels:
    print(f"stride {lv.grid.stride:4d}  grid {lv.grid.height}x{lv.grid.width}"
          f"  foreground {int(lv.foreground.sum()):4d}  center-sampled {int(lv.center_sampled.sum()):3d}")

# the nested box owns the locations it shares with the big one
lv = result.levels[0]
print("owner at (120, 120):", lv.matched[15, 15])

# pretend a detector regressed every side 20% too long
predicted = [lv.regression * 1.2 for lv in result.levels]
iou_targets = compute_iou_targets(result, predicted)
print("IoU target for a 20% overshoot:", round(iou_targets[0][15, 15], 4))

# noisier predictions so some targets fall below the 0.3 cut
rng = np.random.default_rng(0)
noisy = [lv.regression * rng.uniform(0.2, 1.8, lv.regression.shape) for lv in result.levels]
targets = compute_iou_targets(result, noisy)

for mode in SamplingMode:
    ts = build_objectness_training_set(result, targets, mode)
    stats = sample_balance_stats(ts)
    low = int(((ts.target > 0) & (ts.target < 0.3)).sum())
    print(f"{mode.value:5s} samples {len(ts):5d}  positives {stats.positives:4d}"
          f"  negatives {stats.negatives:5d}  ratio {stats.ratio:.3f}  targets in (0, 0.3): {low}")
