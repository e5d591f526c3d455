"""Dense predictions -> ranked proposal list (score, pre-NMS top-k, NMS, post-NMS top-n)."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import BoxXYXY, decode_ltrb_array
from .predictions import DensePredictions

PRE_NMS_K = 2000
PRE_NMS_THRESHOLD = 0.05
NMS_IOU = 0.6
POST_NMS_N_COCO = 100
POST_NMS_N_LVIS = 300
POST_NMS_THRESHOLD = 0.0


class ScoringMode(enum.Enum):
    CENTERNESS = "centerness"
    IOU = "iou"
    GEOMEAN = "geomean"
    LOGITS_CENTERNESS = "logits-centerness"
    LOGITS_IOU = "logits-iou"

    @property
    def class_aware(self) -> bool:
        return self in (ScoringMode.LOGITS_CENTERNESS, ScoringMode.LOGITS_IOU)

    @classmethod
    def parse(cls, value) -> "ScoringMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        for mode in cls:
            if key == mode.value:
                return mode
        raise ValueError(f"unknown scoring mode {value!r}; valid modes: {', '.join(m.value for m in cls)}")


@dataclass(frozen=True)
class Proposal:
    box: BoxXYXY
    score: float
    class_id: Optional[int] = None
    level: int = -1
    row: int = -1
    col: int = -1

    @property
    def sort_key(self):
        return (-self.score, self.level, self.row, self.col)


def score_map(preds: DensePredictions, mode) -> tuple[list[np.ndarray], Optional[list[np.ndarray]]]:
    """Per-level (H, W) scores, plus per-level argmax class maps for the logit modes."""
    mode = ScoringMode.parse(mode)
    scores, classes = [], []
    for lv in preds.levels:
        if mode is ScoringMode.CENTERNESS:
            s = lv.centerness
        elif mode is ScoringMode.IOU:
            s = lv.iou
        elif mode is ScoringMode.GEOMEAN:
            s = np.sqrt(lv.centerness * lv.iou)
        else:
            if lv.num_classes == 0:
                raise ValueError(f"scoring mode {mode.value} needs a classification map")
            obj = lv.centerness if mode is ScoringMode.LOGITS_CENTERNESS else lv.iou
            cls = np.argmax(lv.classification, axis=-1)
            s = np.take_along_axis(lv.classification, cls[..., None], axis=-1)[..., 0] * obj
            classes.append(cls)
        scores.append(np.asarray(s, dtype=np.float64))
    return scores, (classes if mode.class_aware else None)


def select_pre_nms(
    scores: Sequence[np.ndarray],
    regression: Sequence[np.ndarray],
    strides: Sequence[int],
    k: int = PRE_NMS_K,
    score_threshold: float = PRE_NMS_THRESHOLD,
    classes: Optional[Sequence[np.ndarray]] = None,
    bounds: Optional[tuple[float, float]] = None,
    class_ids: Optional[Sequence[int]] = None,
) -> list[Proposal]:
    """Decode every location scoring above the threshold and keep the best ``k``.

    ``bounds`` is (width, height) to clip decoded boxes to; boxes that clip to
    zero area are dropped.  ``class_ids`` maps class-channel index to category id.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    cols = {"level": [], "row": [], "col": [], "score": [], "box": [], "cls": []}
    for lvl, (s, reg, stride) in enumerate(zip(scores, regression, strides)):
        rr, cc = np.nonzero(s > score_threshold)
        if rr.size == 0:
            continue
        off = stride // 2
        xs = off + cc * float(stride)
        ys = off + rr * float(stride)
        boxes = decode_ltrb_array(xs, ys, reg[rr, cc])
        if bounds is not None:
            w, h = bounds
            boxes[:, [0, 2]] = boxes[:, [0, 2]].clip(0, w)
            boxes[:, [1, 3]] = boxes[:, [1, 3]].clip(0, h)
        ok = (boxes[:, 2] > boxes[:, 0]) & (boxes[:, 3] > boxes[:, 1])
        cols["level"].append(np.full(ok.sum(), lvl))
        cols["row"].append(rr[ok])
        cols["col"].append(cc[ok])
        cols["score"].append(s[rr, cc][ok])
        cols["box"].append(boxes[ok])
        cols["cls"].append(classes[lvl][rr, cc][ok] if classes is not None else np.full(ok.sum(), -1))
    if not cols["score"]:
        return []
    level, row, col, score, cls = (np.concatenate(cols[n]) for n in ("level", "row", "col", "score", "cls"))
    boxes = np.concatenate(cols["box"])
    order = np.lexsort((col, row, level, -score))[:k]
    out = []
    for i in order:
        cid = None
        if classes is not None:
            cid = int(cls[i]) if class_ids is None else int(class_ids[cls[i]])
        out.append(Proposal(BoxXYXY(*map(float, boxes[i])), float(score[i]), cid,
                            int(level[i]), int(row[i]), int(col[i])))
    return out


def _greedy(boxes: np.ndarray, iou_threshold: float, max_keep: Optional[int] = None) -> list[int]:
    """Indices kept by greedy NMS over boxes already in priority order."""
    x1, y1, x2, y2 = boxes.T
    areas = (x2 - x1) * (y2 - y1)
    order = np.arange(len(boxes))
    keep = []
    while order.size and (max_keep is None or len(keep) < max_keep):
        i = order[0]
        keep.append(int(i))
        rest = order[1:]
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
        ious = inter / (areas[i] + areas[rest] - inter)
        order = rest[ious <= iou_threshold]
    return keep


def nms(proposals: Sequence[Proposal], iou_threshold: float = NMS_IOU,
        class_agnostic: bool = True, max_keep: Optional[int] = None) -> list[Proposal]:
    """Greedy NMS: keep the best remaining box, drop everything overlapping it by more than the threshold.

    ``max_keep`` stops class-agnostic suppression once that many boxes are
    kept; the result is then a prefix of the full output.
    """
    props = sorted(proposals, key=lambda p: -p.score)  # stable: keeps incoming tie order
    if not props:
        return []
    boxes = np.array([p.box.as_tuple() for p in props])
    if class_agnostic:
        keep = _greedy(boxes, iou_threshold, max_keep)
    else:
        labels = np.array([-1 if p.class_id is None else p.class_id for p in props])
        keep = []
        for c in np.unique(labels):
            idx = np.nonzero(labels == c)[0]
            keep.extend(idx[_greedy(boxes[idx], iou_threshold)].tolist())
        keep.sort()
    return [props[i] for i in keep]


def select_post_nms(proposals: Sequence[Proposal], n: int = POST_NMS_N_COCO,
                    post_threshold: float = POST_NMS_THRESHOLD) -> list[Proposal]:
    if n <= 0:
        raise ValueError("n must be positive")
    props = sorted((p for p in proposals if p.score >= post_threshold), key=lambda p: -p.score)
    return props[:n]


@dataclass(frozen=True)
class PipelineParams:
    pre_nms_k: int = PRE_NMS_K
    pre_nms_threshold: float = PRE_NMS_THRESHOLD
    nms_iou: float = NMS_IOU
    post_nms_n: int = POST_NMS_N_COCO
    post_nms_threshold: float = POST_NMS_THRESHOLD
    # None: class-agnostic for objectness modes, per-class for logit modes
    class_agnostic: Optional[bool] = None
    clip: bool = True

    @classmethod
    def from_config(cls, cfg) -> "PipelineParams":
        return cls(cfg.pre_nms_k, cfg.pre_nms_threshold, cfg.nms_iou, cfg.post_nms_n,
                   cfg.post_nms_threshold, cfg.class_agnostic_nms)


def run_pipeline(preds: DensePredictions, mode, params: PipelineParams = PipelineParams(),
                 class_ids: Optional[Sequence[int]] = None) -> list[Proposal]:
    mode = ScoringMode.parse(mode)
    if not preds.levels:
        return []
    scores, classes = score_map(preds, mode)
    pre = select_pre_nms(
        scores,
        [lv.regression for lv in preds.levels],
        [lv.stride for lv in preds.levels],
        params.pre_nms_k,
        params.pre_nms_threshold,
        classes,
        preds.bounds() if params.clip else None,
        class_ids,
    )
    agnostic = (not mode.class_aware) if params.class_agnostic is None else params.class_agnostic
    # kept boxes come out in score order, so only the first post_nms_n can survive
    kept = nms(pre, params.nms_iou, agnostic, max_keep=params.post_nms_n if agnostic else None)
    return select_post_nms(kept, params.post_nms_n, params.post_nms_threshold)
