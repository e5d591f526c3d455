"""Objectness training-set construction: default, CS-IS and All-Sampling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .assignment import AssignmentResult

IOU_SAMPLING_THRESHOLD = 0.3
POSITIVE_CUT = 0.5


class SamplingMode(enum.Enum):
    FCOS_DEFAULT = "fcos"
    CS_IS = "cs_is"
    ALL = "all"

    @classmethod
    def parse(cls, value) -> "SamplingMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        for mode in cls:
            if key in (mode.value, mode.name.lower()):
                return mode
        raise ValueError(f"unknown sampling mode {value!r}; expected one of {[m.value for m in cls]}")


def iou_sampling(iou_targets: Sequence[np.ndarray], assignment: AssignmentResult,
                 threshold: float = IOU_SAMPLING_THRESHOLD) -> list[np.ndarray]:
    """Zero foreground targets strictly below ``threshold``; everything else unchanged."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    out = []
    for lv, tgt in zip(assignment.levels, iou_targets):
        tgt = np.asarray(tgt, dtype=np.float64)
        out.append(np.where(lv.foreground & (tgt < threshold), 0.0, tgt))
    return out


@dataclass
class ObjectnessTrainingSet:
    """Flat sample arrays: level index, row, column, target."""

    level: np.ndarray
    row: np.ndarray
    col: np.ndarray
    target: np.ndarray
    mode: SamplingMode = SamplingMode.CS_IS
    counts: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.target.size)


def build_objectness_training_set(assignment: AssignmentResult, targets: Sequence[np.ndarray],
                                  mode=SamplingMode.CS_IS,
                                  threshold: float = IOU_SAMPLING_THRESHOLD) -> ObjectnessTrainingSet:
    """Collect objectness samples under one of the three regimes.

    ``targets`` are raw per-level objectness targets (IoU or centerness maps);
    IOU Sampling is applied here for ``CS_IS``.
    """
    mode = SamplingMode.parse(mode)
    if mode is SamplingMode.CS_IS:
        targets = iou_sampling(targets, assignment, threshold)
    lv_idx, rows, cols, vals = [], [], [], []
    for k, (lv, tgt) in enumerate(zip(assignment.levels, targets)):
        tgt = np.asarray(tgt, dtype=np.float64)
        if tgt.shape != lv.matched.shape:
            raise ValueError(f"target map shape {tgt.shape} != grid shape {lv.matched.shape}")
        if mode is SamplingMode.ALL:
            sel = np.ones(lv.matched.shape, dtype=bool)
            tgt = np.where(lv.foreground, tgt, 0.0)
        else:
            sel = lv.foreground & lv.center_sampled
        r, c = np.nonzero(sel)
        lv_idx.append(np.full(r.size, k, dtype=np.int64))
        rows.append(r)
        cols.append(c)
        vals.append(tgt[r, c])
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    ts = ObjectnessTrainingSet(cat(lv_idx, np.int64), cat(rows, np.int64), cat(cols, np.int64),
                               cat(vals, np.float64), mode)
    ts.counts = {
        "samples": len(ts),
        "foreground": assignment.foreground_count(),
        "center_sampled": assignment.center_sampled_count(),
        "locations": assignment.location_count(),
    }
    return ts


@dataclass(frozen=True)
class BalanceStats:
    positives: int
    negatives: int
    ratio: float


def sample_balance_stats(ts, positive_cut: float = POSITIVE_CUT) -> BalanceStats:
    """Positive (> cut) / negative (<= cut) counts and their ratio.

    ``ts`` may be an :class:`ObjectnessTrainingSet` or a plain array of targets.
    """
    if not 0 < positive_cut < 1:
        raise ValueError("positive_cut must lie in (0, 1)")
    targets = np.asarray(ts.target if isinstance(ts, ObjectnessTrainingSet) else ts, dtype=np.float64)
    if targets.size == 0:
        return BalanceStats(0, 0, 0.0)
    pos = int((targets > positive_cut).sum())
    neg = int(targets.size - pos)
    ratio = math.inf if neg == 0 else pos / neg
    return BalanceStats(pos, neg, ratio)
