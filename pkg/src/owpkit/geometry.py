"""Box and LTRB arithmetic.

Scalar helpers operate on :class:`BoxXYXY` / :class:`Ltrb` values; the
``*_array`` variants take ``(..., 4)`` float arrays and are what the dense
modules use.  Everything is float64 internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate boxes or LTRB tuples."""


@dataclass(frozen=True)
class BoxXYXY:
    x1: float
    y1: float
    x2: float
    y2: float
    category_id: Optional[int] = None

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise GeometryError(f"non-finite box coordinates {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise GeometryError(f"box {coords} has non-positive area")
        if self.category_id is not None and self.category_id < 0:
            raise GeometryError(f"negative category id {self.category_id}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Ltrb:
    """Distances from a location to the left, right, top and bottom sides."""

    l: float
    r: float
    t: float
    b: float

    def __post_init__(self):
        comps = (self.l, self.r, self.t, self.b)
        if not all(math.isfinite(c) and c >= 0 for c in comps):
            raise GeometryError(f"invalid ltrb {comps}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.l, self.r, self.t, self.b)


def _check_extent(d: Ltrb) -> None:
    if d.l + d.r <= 0 or d.t + d.b <= 0:
        raise GeometryError(f"degenerate ltrb {d.as_tuple()}")


def centerness_target(target: Ltrb) -> float:
    """sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b))."""
    _check_extent(target)
    lr = min(target.l, target.r) / max(target.l, target.r)
    tb = min(target.t, target.b) / max(target.t, target.b)
    return math.sqrt(lr * tb)


def iou_ltrb(pred: Ltrb, target: Ltrb) -> float:
    """IoU of two boxes given as LTRB tuples anchored at the same location."""
    inter = (min(pred.l, target.l) + min(pred.r, target.r)) * (
        min(pred.b, target.b) + min(pred.t, target.t)
    )
    union = (
        (target.l + target.r) * (target.t + target.b)
        + (pred.l + pred.r) * (pred.t + pred.b)
        - inter
    )
    if union <= 0:
        raise GeometryError("iou_ltrb: union is not positive")
    return inter / union


def iou_xyxy(a: BoxXYXY, b: BoxXYXY) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def ltrb_to_box(location_x: float, location_y: float, d: Ltrb) -> BoxXYXY:
    # BoxXYXY validation rejects the degenerate case
    return BoxXYXY(location_x - d.l, location_y - d.t, location_x + d.r, location_y + d.b)


def box_to_ltrb(location_x: float, location_y: float, box: BoxXYXY) -> Optional[Ltrb]:
    """LTRB of ``box`` seen from the location, or ``None`` if not strictly inside."""
    l = location_x - box.x1
    r = box.x2 - location_x
    t = location_y - box.y1
    b = box.y2 - location_y
    if min(l, r, t, b) <= 0:
        return None
    return Ltrb(l, r, t, b)


# --------------------------------------------------------------------------
# vectorised forms


def centerness_array(ltrb: np.ndarray) -> np.ndarray:
    """Centerness of every ``(..., 4)`` LTRB row.  Degenerate rows give 0."""
    ltrb = np.asarray(ltrb, dtype=np.float64)
    l, r, t, b = np.moveaxis(ltrb, -1, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lr = np.minimum(l, r) / np.maximum(l, r)
        tb = np.minimum(t, b) / np.maximum(t, b)
        out = np.sqrt(lr * tb)
    return np.where(np.isfinite(out), out, 0.0)


def iou_ltrb_array(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Elementwise :func:`iou_ltrb` over ``(..., 4)`` arrays.  Zero-union rows give 0."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    pl, pr, pt, pb = np.moveaxis(pred, -1, 0)
    tl, tr, tt, tb = np.moveaxis(target, -1, 0)
    inter = (np.minimum(pl, tl) + np.minimum(pr, tr)) * (np.minimum(pb, tb) + np.minimum(pt, tt))
    union = (tl + tr) * (tt + tb) + (pl + pr) * (pt + pb) - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = inter / union
    return np.where(union > 0, out, 0.0)


def box_area_array(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float64)
    return (boxes[..., 2] - boxes[..., 0]) * (boxes[..., 3] - boxes[..., 1])


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(N, M)`` IoU matrix between two sets of corner-form boxes."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = box_area_array(a)[:, None] + box_area_array(b)[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = inter / union
    return np.where(union > 0, out, 0.0)


def decode_ltrb_array(xs: np.ndarray, ys: np.ndarray, ltrb: np.ndarray) -> np.ndarray:
    """Corner-form boxes ``(..., 4)`` decoded from LTRB at the given locations."""
    ltrb = np.asarray(ltrb, dtype=np.float64)
    return np.stack(
        [xs - ltrb[..., 0], ys - ltrb[..., 2], xs + ltrb[..., 1], ys + ltrb[..., 3]], axis=-1
    )
