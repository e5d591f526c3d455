"""Unknown-object masking: background locations dropped from classification supervision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .assignment import AssignmentResult
from .geometry import decode_ltrb_array
from .predictions import DensePredictions
from .proposals import _greedy

MASK_THRESHOLDS = (0.925, 0.95)
MASK_START_ITERATIONS = (5000, 10000, 30000, 60000)
DEFAULT_MASK_THRESHOLD = 0.95
DEFAULT_MASK_START = 5000
OBJECTNESS_SOURCES = ("iou", "centerness", "geomean")


@dataclass
class BackgroundMask:
    """Per-level boolean maps; True marks a location excluded from background supervision."""

    excluded: list[np.ndarray]

    def count(self) -> int:
        return int(sum(m.sum() for m in self.excluded))

    def issubset(self, other: "BackgroundMask") -> bool:
        return all(not (a & ~b).any() for a, b in zip(self.excluded, other.excluded))


def objectness_maps(preds: DensePredictions, source: str = "iou") -> list[np.ndarray]:
    if source == "iou":
        return [lv.iou for lv in preds.levels]
    if source == "centerness":
        return [lv.centerness for lv in preds.levels]
    if source == "geomean":
        return [np.sqrt(lv.iou * lv.centerness) for lv in preds.levels]
    raise ValueError(f"unknown objectness source {source!r}; expected one of {OBJECTNESS_SOURCES}")


def _triggers(objectness, assignment, threshold):
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if len(objectness) != len(assignment.levels):
        raise ValueError("objectness level count does not match assignment")
    out = []
    for obj, lv in zip(objectness, assignment.levels):
        obj = np.asarray(obj)
        if obj.shape != lv.matched.shape:
            raise ValueError(f"objectness map shape {obj.shape} != grid shape {lv.matched.shape}")
        out.append(~lv.foreground & (obj > threshold))
    return out


def unknown_object_mask(objectness: Sequence[np.ndarray], assignment: AssignmentResult,
                        threshold: float = DEFAULT_MASK_THRESHOLD) -> BackgroundMask:
    """Exclude every non-foreground location whose objectness is above the threshold."""
    return BackgroundMask(_triggers(objectness, assignment, threshold))


def unknown_area_mask(objectness: Sequence[np.ndarray], regression: Sequence[np.ndarray],
                      assignment: AssignmentResult, threshold: float = DEFAULT_MASK_THRESHOLD,
                      nms_iou: float | None = None) -> BackgroundMask:
    """Exclude every non-foreground location inside a box predicted at a trigger location.

    Triggers are the locations the pixel-level mask would exclude.  A trigger
    whose predicted box is degenerate contributes only its own location.
    ``nms_iou`` optionally suppresses overlapping trigger boxes first.
    """
    triggers = _triggers(objectness, assignment, threshold)
    boxes, scores, own = [], [], [t.copy() for t in triggers]
    for trig, obj, reg, lv in zip(triggers, objectness, regression, assignment.levels):
        rr, cc = np.nonzero(trig)
        if rr.size == 0:
            continue
        g = lv.grid
        xs = g.xs[rr, cc]
        ys = g.ys[rr, cc]
        b = decode_ltrb_array(xs, ys, np.asarray(reg, dtype=np.float64)[rr, cc])
        ok = (b[:, 2] > b[:, 0]) & (b[:, 3] > b[:, 1])
        boxes.append(b[ok])
        scores.append(np.asarray(obj)[rr, cc][ok])
    excluded = own
    if boxes:
        boxes = np.concatenate(boxes)
        if nms_iou is not None and len(boxes):
            order = np.argsort(-np.concatenate(scores), kind="stable")
            boxes = boxes[order][_greedy(boxes[order], nms_iou)]
        for m, lv in zip(excluded, assignment.levels):
            xs = lv.grid.xs.ravel()
            ys = lv.grid.ys.ravel()
            hit = np.zeros(xs.size, dtype=bool)
            for start in range(0, len(boxes), 256):
                b = boxes[start:start + 256]
                hit |= ((xs[:, None] >= b[:, 0]) & (xs[:, None] <= b[:, 2])
                        & (ys[:, None] >= b[:, 1]) & (ys[:, None] <= b[:, 3])).any(axis=1)
            m |= hit.reshape(m.shape) & ~lv.foreground
    return BackgroundMask(excluded)


def masking_schedule(iteration: int, start_iteration: int = DEFAULT_MASK_START) -> bool:
    if iteration < 0 or start_iteration < 0:
        raise ValueError("iterations must be non-negative")
    return iteration >= start_iteration
