"""Seeded synthetic detector and scene generator.

Stands in for a trained network: dense maps are fabricated from ground truth
with controllable noise, so the pipeline and evaluator can be exercised end
to end with known expected behaviour.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .assignment import assign_targets, boxes_to_array, make_grids
from .dataio import Annotation, AnnotationSet, Category, Config, ImageInfo
from .evaluation import AR_NS, ClassSplit, EvalReport, Task, coco_categories, evaluate
from .geometry import BoxXYXY, centerness_array, iou_ltrb_array, pairwise_iou
from .predictions import DensePredictions, LevelPredictions
from .proposals import PipelineParams, Proposal, ScoringMode, run_pipeline
from .rng import CounterRng


@dataclass(frozen=True)
class NoiseSpec:
    regression_sigma: float = 0.0
    objectness_noise: float = 0.0
    classification_confidence: float = 0.9
    background_score_level: float = 0.05  # at the pre-NMS threshold: background never becomes a proposal
    seed: int = 0

    def __post_init__(self):
        if self.regression_sigma < 0 or self.objectness_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0 < self.classification_confidence <= 1:
            raise ValueError("classification_confidence must lie in (0, 1]")
        if not 0 <= self.background_score_level < 1:
            raise ValueError("background_score_level must lie in [0, 1)")


def _image_stream(image_id: int) -> int:
    return 2 * int(image_id)


def _scene_stream(image_id: int) -> int:
    return 2 * int(image_id) + 1


def synthesize_predictions(annotations: AnnotationSet, image_id: int, config: Config,
                           noise: NoiseSpec) -> DensePredictions:
    """Fabricate dense maps for one image.

    Foreground locations regress to their true LTRB scaled per component by
    ``1 + N(0, regression_sigma)`` (floored at 1% of the box extent); the IoU
    map is the IoU of that perturbed regression against the truth, the
    centerness map the true centerness, both plus clipped ``N(0, objectness_noise)``.
    Background locations get uniform scores in ``[0, background_score_level)``
    and small random regressions.
    """
    if image_id not in annotations.images:
        raise KeyError(f"image id {image_id} not in annotation set")
    img = annotations.images[image_id]
    anns = annotations.for_image(image_id)
    gt = boxes_to_array([a.box for a in anns])
    class_index = {c: k for k, c in enumerate(annotations.category_ids())}
    gt_cls = np.array([class_index[a.category_id] for a in anns], dtype=np.int64)
    C = len(class_index)

    levels = config.levels()
    grids = make_grids(img.height, img.width, levels)
    assignment = assign_targets(gt, levels, grids, config.center_radius)
    rng = CounterRng(noise.seed, _image_stream(image_id))
    bg_level = noise.background_score_level

    out = []
    for spec, lv in zip(levels, assignment.levels):
        H, W = lv.grid.height, lv.grid.width
        fg = lv.foreground
        # fixed draw order per level keeps streams reproducible
        reg_noise = rng.normal((H, W, 4), noise.regression_sigma)
        iou_noise = rng.normal((H, W), noise.objectness_noise)
        ctr_noise = rng.normal((H, W), noise.objectness_noise)
        bg_iou = rng.uniform((H, W), 0.0, bg_level)
        bg_ctr = rng.uniform((H, W), 0.0, bg_level)
        bg_cls = rng.uniform((H, W, C), 0.0, bg_level)
        bg_reg = rng.uniform((H, W, 4), 0.5, 1.5) * spec.stride

        m = np.where(fg, lv.matched, 0)
        extent = np.zeros((H, W, 4))
        if len(gt):
            w = gt[m, 2] - gt[m, 0]
            h = gt[m, 3] - gt[m, 1]
            extent = np.stack([w, w, h, h], axis=-1)
        true = lv.regression
        if noise.regression_sigma > 0:
            pert = np.maximum(true * (1.0 + reg_noise), 0.01 * extent)
        else:
            pert = true.copy()
        fg_iou = iou_ltrb_array(pert, true)
        fg_ctr = centerness_array(true)
        if noise.objectness_noise > 0:
            fg_iou = np.clip(fg_iou + iou_noise, 0.0, 1.0)
            fg_ctr = np.clip(fg_ctr + ctr_noise, 0.0, 1.0)

        cls = bg_cls.copy()
        if C and len(gt):
            fg_cls = np.full((H, W, C), bg_level)
            np.put_along_axis(fg_cls, gt_cls[m][..., None], noise.classification_confidence, axis=-1)
            cls = np.where(fg[..., None], fg_cls, cls)

        out.append(LevelPredictions(
            spec.stride,
            cls,
            np.where(fg[..., None], pert, bg_reg),
            np.where(fg, fg_ctr, bg_ctr),
            np.where(fg, fg_iou, bg_iou),
        ))
    return DensePredictions(out, (img.height, img.width), {"image_id": image_id})


def random_annotations(
    num_images: int,
    seed: int = 0,
    config: Optional[Config] = None,
    canvas: tuple[int, int] = (320, 640),
    boxes_per_image: tuple[int, int] = (1, 20),
    box_size: tuple[float, float] = (16.0, 256.0),
    max_overlap: float = 0.3,
    categories: Optional[Sequence[Category]] = None,
    max_attempts: int = 30,
) -> AnnotationSet:
    """Random scenes of integer-coordinate boxes on virtual canvases.

    A candidate box is kept only if it overlaps every earlier box by at most
    ``max_overlap`` IoU and, once added, every box in the image still owns at
    least one foreground location under the config's level layout.  This
    makes every generated box recoverable by a perfect detector.
    """
    config = config or Config()
    categories = list(categories) if categories is not None else coco_categories()
    levels = config.levels()
    images, anns = {}, []
    next_ann = 1
    for image_id in range(1, num_images + 1):
        rng = CounterRng(seed, _scene_stream(image_id))
        h, w = (int(v) for v in rng.integers(canvas[0], canvas[1] + 1, (2,)))
        images[image_id] = ImageInfo(image_id, w, h, f"synthetic_{image_id:06d}.jpg")
        grids = make_grids(h, w, levels)
        target = int(rng.integers(boxes_per_image[0], boxes_per_image[1] + 1))
        boxes: list[tuple] = []
        for _ in range(target * max_attempts):
            if len(boxes) >= target:
                break
            u = rng.uniform((6,))
            side = math.exp(math.log(box_size[0]) + u[0] * math.log(box_size[1] / box_size[0]))
            aspect = math.exp((u[1] - 0.5) * 2 * math.log(2.0))
            bw = max(2, min(w - 1, round(side * math.sqrt(aspect))))
            bh = max(2, min(h - 1, round(side / math.sqrt(aspect))))
            x1 = math.floor(u[2] * (w - bw))
            y1 = math.floor(u[3] * (h - bh))
            cand = (x1, y1, x1 + bw, y1 + bh)
            arr = np.array(boxes + [cand], dtype=np.float64)
            if boxes and pairwise_iou(arr[-1:], arr[:-1]).max() > max_overlap:
                continue
            res = assign_targets(arr, levels, grids, config.center_radius)
            owned = np.zeros(len(arr), dtype=bool)
            for lv in res.levels:
                owned[np.unique(lv.matched[lv.foreground])] = True
            if not owned.all():
                continue
            boxes.append(cand)
            cat = categories[int(u[4] * len(categories)) % len(categories)].id
            anns.append(Annotation(next_ann, image_id, cat, BoxXYXY(*map(float, cand), cat)))
            next_ann += 1
    return AnnotationSet(images, anns, categories)


def _pipeline_for_image(annotations, image_id, config, noise, modes, params, class_ids):
    preds = synthesize_predictions(annotations, image_id, config, noise)
    return {m: run_pipeline(preds, m, params, class_ids) for m in modes}


def run_scenario(
    annotations: AnnotationSet,
    split: Optional[ClassSplit],
    config: Config,
    noise: NoiseSpec,
    modes: Sequence = (ScoringMode.IOU,),
    task=Task.NOVEL_RECALL,
    ar_ns: Sequence[int] = AR_NS,
    jobs: Optional[int] = None,
) -> dict[ScoringMode, EvalReport]:
    """Synthesize, run the proposal pipeline and evaluate, once per scoring mode."""
    modes = [ScoringMode.parse(m) for m in modes]
    params = PipelineParams.from_config(config)
    class_ids = annotations.category_ids()
    image_ids = annotations.image_ids()
    per_mode: dict[ScoringMode, dict[int, list[Proposal]]] = {m: {} for m in modes}
    work = lambda i: _pipeline_for_image(annotations, i, config, noise, modes, params, class_ids)  # noqa: E731
    if jobs and jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(work, image_ids))
    else:
        results = [work(i) for i in image_ids]
    for image_id, res in zip(image_ids, results):
        for m in modes:
            per_mode[m][image_id] = res[m]
    return {m: evaluate(per_mode[m], annotations, split, task, ar_ns) for m in modes}


def foreground_iou_scores(annotations: AnnotationSet, config: Config, noise: NoiseSpec,
                          image_ids: Optional[Sequence[int]] = None) -> np.ndarray:
    """Synthetic IoU-branch values at every foreground location of the given images."""
    vals = []
    for image_id in image_ids if image_ids is not None else annotations.image_ids():
        img = annotations.images[image_id]
        levels = config.levels()
        gt = [a.box for a in annotations.for_image(image_id)]
        res = assign_targets(gt, levels, make_grids(img.height, img.width, levels), config.center_radius)
        preds = synthesize_predictions(annotations, image_id, config, noise)
        for lv, p in zip(res.levels, preds.levels):
            vals.append(p.iou[lv.foreground])
    return np.concatenate(vals) if vals else np.zeros(0)
