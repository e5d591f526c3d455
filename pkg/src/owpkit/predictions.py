"""Container for per-level dense head outputs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .assignment import LocationGrid


@dataclass
class LevelPredictions:
    stride: int
    classification: np.ndarray  # (H, W, C) in [0, 1]; C may be 0
    regression: np.ndarray  # (H, W, 4) LTRB >= 0
    centerness: np.ndarray  # (H, W) in [0, 1]
    iou: np.ndarray  # (H, W) in [0, 1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.regression.shape[:2]

    @property
    def num_classes(self) -> int:
        return self.classification.shape[-1]

    def validate(self) -> None:
        H, W = self.shape
        if self.regression.shape != (H, W, 4):
            raise ValueError(f"regression map must be (H, W, 4), got {self.regression.shape}")
        if self.classification.ndim != 3 or self.classification.shape[:2] != (H, W):
            raise ValueError(f"classification map shape {self.classification.shape} != ({H}, {W}, C)")
        for name in ("centerness", "iou"):
            if getattr(self, name).shape != (H, W):
                raise ValueError(f"{name} map shape {getattr(self, name).shape} != ({H}, {W})")
        for name in ("classification", "centerness", "iou"):
            arr = getattr(self, name)
            if arr.size and (np.nanmin(arr) < 0 or np.nanmax(arr) > 1 or not np.isfinite(arr).all()):
                raise ValueError(f"{name} scores must lie in [0, 1]")
        if self.regression.size and not (np.isfinite(self.regression).all() and self.regression.min() >= 0):
            raise ValueError("regression components must be finite and >= 0")


@dataclass
class DensePredictions:
    levels: list[LevelPredictions]
    # (height, width) of the source image; None means "use the lattice extent"
    image_size: Optional[tuple[int, int]] = None
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        for lv in self.levels:
            lv.validate()

    @property
    def num_classes(self) -> int:
        return self.levels[0].num_classes if self.levels else 0

    def grids(self) -> list[LocationGrid]:
        return [LocationGrid(k, lv.stride, *lv.shape) for k, lv in enumerate(self.levels)]

    def bounds(self) -> tuple[float, float]:
        """(width, height) used for clipping decoded boxes."""
        if self.image_size is not None:
            h, w = self.image_size
            return float(w), float(h)
        if not self.levels:
            return 0.0, 0.0
        lv = self.levels[0]
        H, W = lv.shape
        return float(W * lv.stride), float(H * lv.stride)

    @classmethod
    def empty_like_grids(cls, grids: list[LocationGrid], num_classes: int = 0,
                         image_size: Optional[tuple[int, int]] = None) -> "DensePredictions":
        levels = [
            LevelPredictions(
                g.stride,
                np.zeros((g.height, g.width, num_classes)),
                np.zeros((g.height, g.width, 4)),
                np.zeros((g.height, g.width)),
                np.zeros((g.height, g.width)),
            )
            for g in grids
        ]
        return cls(levels, image_size)
