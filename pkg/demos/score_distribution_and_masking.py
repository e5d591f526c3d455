"""
IoU scores and unknown-object masking
=====================================

Look at where the synthetic IoU branch puts its mass, then count how
many background locations each masking variant would drop.
"""

import numpy as np

from owpkit.assignment import assign_targets, make_grids
from owpkit.dataio import Config
from owpkit.evaluation import score_histogram
from owpkit.masking import MASK_THRESHOLDS, objectness_maps, unknown_area_mask, unknown_object_mask
from owpkit.synth import NoiseSpec, foreground_iou_scores, random_annotations, synthesize_predictions

cfg = Config()
scenes = random_annotations(10, seed=3)
scores = foreground_iou_scores(scenes, cfg, NoiseSpec(regression_sigma=0.1, seed=3))

hist = score_histogram(scores, bins=10)
print(hist.to_csv(), end="")
print(f"n {hist.n}  median {np.median(scores):.3f}  skewness {hist.skewness:.3f}")

# an object the annotators missed: the detector still fires on it, but
# assignment only knows the remaining boxes, so its locations are background
image_id = max(scenes.image_ids(), key=lambda i: len(scenes.for_image(i)))
img = scenes.images[image_id]
anns = scenes.for_image(image_id)
missed = max(anns, key=lambda a: a.box.area)
levels = cfg.levels()
result = assign_targets([a.box for a in anns if a is not missed], levels,
                        make_grids(img.height, img.width, levels))
preds = synthesize_predictions(scenes, image_id, cfg, NoiseSpec(0.05, objectness_noise=0.02, seed=3))
obj = objectness_maps(preds, "iou")
regression = [lv.regression for lv in preds.levels]
print(f"image {image_id}: {len(anns)} boxes, one missed with area {missed.box.area:.0f}")

for thr in MASK_THRESHOLDS:
    pixel = unknown_object_mask(obj, result, thr)
    area = unknown_area_mask(obj, regression, result, thr)
    print(f"threshold {thr}: pixel mask {pixel.count()}  area mask {area.count()}")
