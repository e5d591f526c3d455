"""Loss values for the three head branches.  Inputs are probabilities, not logits."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import GeometryError, Ltrb, iou_ltrb


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


def _check_prob(pred: float) -> None:
    if not 0 < pred < 1:
        raise ValueError(f"prediction {pred} must lie strictly inside (0, 1)")


def bce_loss(pred: float, target: float) -> float:
    _check_prob(pred)
    if not 0 <= target <= 1:
        raise ValueError(f"target {target} outside [0, 1]")
    return -(target * math.log(pred) + (1 - target) * math.log1p(-pred))


def iou_loss(pred: Ltrb, target: Ltrb) -> float:
    """-ln IoU (UnitBox form)."""
    iou = iou_ltrb(pred, target)
    if iou <= 0:
        raise GeometryError("iou_loss undefined at zero IoU")
    return -math.log(iou)


def focal_loss(pred: float, label: int, params: FocalParams = FocalParams()) -> float:
    _check_prob(pred)
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    if label == 1:
        p_t, alpha_t, log_pt = pred, params.alpha, math.log(pred)
    else:
        p_t, alpha_t, log_pt = 1 - pred, 1 - params.alpha, math.log1p(-pred)
    return -alpha_t * (1 - p_t) ** params.gamma * log_pt
