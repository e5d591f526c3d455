"""Dense anchor-free target assignment over FPN location grids."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BoxXYXY, centerness_array, iou_ltrb_array

INF = math.inf


@dataclass(frozen=True)
class FpnLevelSpec:
    stride: int
    range_min: float
    range_max: float = INF

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if not self.range_min < self.range_max:
            raise ValueError(f"empty regression range [{self.range_min}, {self.range_max})")


DEFAULT_STRIDES = (8, 16, 32, 64, 128)
DEFAULT_RANGES = ((0.0, 64.0), (64.0, 128.0), (128.0, 256.0), (256.0, 512.0), (512.0, INF))
DEFAULT_CENTER_RADIUS = 1.5


def default_levels() -> list[FpnLevelSpec]:
    return [FpnLevelSpec(s, lo, hi) for s, (lo, hi) in zip(DEFAULT_STRIDES, DEFAULT_RANGES)]


def validate_levels(levels: Sequence[FpnLevelSpec]) -> None:
    """Strides must increase and ranges must tile without gaps or overlaps."""
    if not levels:
        raise ValueError("at least one FPN level is required")
    for prev, cur in zip(levels, levels[1:]):
        if cur.stride <= prev.stride:
            raise ValueError("strides must strictly increase across levels")
        if prev.range_max != cur.range_min:
            raise ValueError(
                f"level ranges not contiguous: {prev.range_max} != {cur.range_min}"
            )


@dataclass(frozen=True)
class LocationGrid:
    level: int
    stride: int
    height: int
    width: int

    @property
    def offset(self) -> int:
        return self.stride // 2

    @property
    def xs(self) -> np.ndarray:
        """(H, W) image x coordinate of every cell."""
        col = self.offset + np.arange(self.width, dtype=np.float64) * self.stride
        return np.broadcast_to(col[None, :], (self.height, self.width))

    @property
    def ys(self) -> np.ndarray:
        row = self.offset + np.arange(self.height, dtype=np.float64) * self.stride
        return np.broadcast_to(row[:, None], (self.height, self.width))

    @property
    def size(self) -> int:
        return self.height * self.width

    def coordinate(self, i: int, j: int) -> tuple[float, float]:
        return (float(self.offset + j * self.stride), float(self.offset + i * self.stride))


def make_locations(image_h: int, image_w: int, level: FpnLevelSpec, index: int = 0) -> LocationGrid:
    if image_h <= 0 or image_w <= 0:
        raise ValueError(f"image dims must be positive, got {image_h}x{image_w}")
    s = level.stride
    return LocationGrid(index, s, -(-image_h // s), -(-image_w // s))


def make_grids(image_h: int, image_w: int, levels: Sequence[FpnLevelSpec]) -> list[LocationGrid]:
    return [make_locations(image_h, image_w, lv, k) for k, lv in enumerate(levels)]


@dataclass
class LevelAssignment:
    """Per-location targets for one level.

    ``matched`` holds the ground-truth index or -1 for background; the other
    maps are zero at background locations.
    """

    grid: LocationGrid
    matched: np.ndarray  # (H, W) int64
    regression: np.ndarray  # (H, W, 4) float64
    centerness: np.ndarray  # (H, W) float64
    center_sampled: np.ndarray  # (H, W) bool

    @property
    def foreground(self) -> np.ndarray:
        return self.matched >= 0


@dataclass
class AssignmentResult:
    levels: list[LevelAssignment]

    def foreground_count(self) -> int:
        return int(sum(lv.foreground.sum() for lv in self.levels))

    def center_sampled_count(self) -> int:
        return int(sum(lv.center_sampled.sum() for lv in self.levels))

    def location_count(self) -> int:
        return sum(lv.grid.size for lv in self.levels)

    @property
    def grids(self) -> list[LocationGrid]:
        return [lv.grid for lv in self.levels]


def boxes_to_array(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.astype(np.float64).reshape(-1, 4)
    return np.array([b.as_tuple() if isinstance(b, BoxXYXY) else tuple(b) for b in boxes],
                    dtype=np.float64).reshape(-1, 4)


_CHUNK = 4096


def _assign_level(grid: LocationGrid, spec: FpnLevelSpec, gt: np.ndarray, radius: float) -> LevelAssignment:
    H, W = grid.height, grid.width
    xs = grid.xs.ravel()
    ys = grid.ys.ravel()
    n = xs.size
    matched = np.full(n, -1, dtype=np.int64)
    regression = np.zeros((n, 4))
    center = np.zeros(n, dtype=bool)
    if len(gt):
        x1, y1, x2, y2 = gt.T
        area = (x2 - x1) * (y2 - y1)
        cx = (x1 + x2) / 2
        cy = (y1 + y2) / 2
        half = radius * spec.stride
        sx1 = np.maximum(cx - half, x1)
        sx2 = np.minimum(cx + half, x2)
        sy1 = np.maximum(cy - half, y1)
        sy2 = np.minimum(cy + half, y2)
        for start in range(0, n, _CHUNK):
            sl = slice(start, start + _CHUNK)
            px = xs[sl, None]
            py = ys[sl, None]
            reg = np.stack([px - x1, x2 - px, py - y1, y2 - py], axis=-1)  # (n, M, 4)
            inside = reg.min(axis=-1) > 0
            max_reg = reg.max(axis=-1)
            ok = inside & (max_reg >= spec.range_min) & (max_reg < spec.range_max)
            # argmin returns the first minimum, so equal areas go to the lowest index
            best = np.argmin(np.where(ok, area, INF), axis=1)
            fg = ok.any(axis=1)
            rows = np.nonzero(fg)[0]
            k = best[rows]
            matched[sl][rows] = k
            regression[sl][rows] = reg[rows, k]
            lx = xs[sl][rows]
            ly = ys[sl][rows]
            center[sl][rows] = (lx > sx1[k]) & (lx < sx2[k]) & (ly > sy1[k]) & (ly < sy2[k])
    fg = matched >= 0
    centerness = np.where(fg, centerness_array(regression), 0.0)
    return LevelAssignment(
        grid=grid,
        matched=matched.reshape(H, W),
        regression=regression.reshape(H, W, 4),
        centerness=centerness.reshape(H, W),
        center_sampled=center.reshape(H, W),
    )


def assign_targets(
    boxes,
    levels: Sequence[FpnLevelSpec],
    grids: Sequence[LocationGrid],
    center_radius: float = DEFAULT_CENTER_RADIUS,
) -> AssignmentResult:
    """Match every grid location to at most one ground-truth box.

    A location is foreground when it is strictly inside a box whose largest
    LTRB component falls in the level's ``[range_min, range_max)``; the
    smallest such box wins.  ``center_sampled`` further requires the location
    to sit strictly inside the ``center_radius * stride`` square around the
    matched box centre, clipped to the box.
    """
    if center_radius <= 0:
        raise ValueError("center_radius must be positive")
    if len(levels) != len(grids):
        raise ValueError("one grid per level is required")
    gt = boxes_to_array(boxes)
    return AssignmentResult([_assign_level(g, s, gt, center_radius) for s, g in zip(levels, grids)])


def compute_iou_targets(assignment: AssignmentResult, predicted_regression: Sequence[np.ndarray]) -> list[np.ndarray]:
    """IoU between predicted and target LTRB at every foreground location; 0 elsewhere."""
    if len(predicted_regression) != len(assignment.levels):
        raise ValueError("prediction level count does not match assignment")
    out = []
    for lv, pred in zip(assignment.levels, predicted_regression):
        pred = np.asarray(pred, dtype=np.float64)
        if pred.shape != lv.regression.shape:
            raise ValueError(f"regression map shape {pred.shape} != grid shape {lv.regression.shape}")
        iou = iou_ltrb_array(pred, lv.regression)
        out.append(np.where(lv.foreground, iou, 0.0))
    return out
