"""Open-world evaluation: class splits, annotation filtering, AR@N, AP and score histograms."""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataio import Annotation, AnnotationSet, Category, DataError
from .geometry import BoxXYXY, pairwise_iou
from .proposals import Proposal

IOU_THRESHOLDS = np.round(np.linspace(0.5, 0.95, 10), 2)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AR_NS = (10, 100, 300)

# COCO 2017 categories (id, name)
COCO_CATEGORIES = [
    (1, "person"), (2, "bicycle"), (3, "car"), (4, "motorcycle"), (5, "airplane"), (6, "bus"),
    (7, "train"), (8, "truck"), (9, "boat"), (10, "traffic light"), (11, "fire hydrant"),
    (13, "stop sign"), (14, "parking meter"), (15, "bench"), (16, "bird"), (17, "cat"), (18, "dog"),
    (19, "horse"), (20, "sheep"), (21, "cow"), (22, "elephant"), (23, "bear"), (24, "zebra"),
    (25, "giraffe"), (27, "backpack"), (28, "umbrella"), (31, "handbag"), (32, "tie"),
    (33, "suitcase"), (34, "frisbee"), (35, "skis"), (36, "snowboard"), (37, "sports ball"),
    (38, "kite"), (39, "baseball bat"), (40, "baseball glove"), (41, "skateboard"),
    (42, "surfboard"), (43, "tennis racket"), (44, "bottle"), (46, "wine glass"), (47, "cup"),
    (48, "fork"), (49, "knife"), (50, "spoon"), (51, "bowl"), (52, "banana"), (53, "apple"),
    (54, "sandwich"), (55, "orange"), (56, "broccoli"), (57, "carrot"), (58, "hot dog"),
    (59, "pizza"), (60, "donut"), (61, "cake"), (62, "chair"), (63, "couch"),
    (64, "potted plant"), (65, "bed"), (67, "dining table"), (70, "toilet"), (72, "tv"),
    (73, "laptop"), (74, "mouse"), (75, "remote"), (76, "keyboard"), (77, "cell phone"),
    (78, "microwave"), (79, "oven"), (80, "toaster"), (81, "sink"), (82, "refrigerator"),
    (84, "book"), (85, "clock"), (86, "vase"), (87, "scissors"), (88, "teddy bear"),
    (89, "hair drier"), (90, "toothbrush"),
]

# the 20 PASCAL VOC classes under their COCO names
VOC_CLASSES_IN_COCO = frozenset({
    "airplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow",
    "dining table", "dog", "horse", "motorcycle", "person", "potted plant", "sheep", "couch",
    "train", "tv",
})

LVIS_COUNTS = {"r": 337, "c": 461, "f": 405}
LVIS_SEEN_FREQUENT = 305


def coco_categories() -> list[Category]:
    return [Category(i, n) for i, n in COCO_CATEGORIES]


class Task(enum.Enum):
    NOVEL_RECALL = "novel-recall"
    BASE_PRECISION = "base-precision"

    @classmethod
    def parse(cls, value) -> "Task":
        if isinstance(value, cls):
            return value
        for t in cls:
            if str(value).lower().replace("_", "-") == t.value:
                return t
        raise ValueError(f"unknown task {value!r}")


@dataclass(frozen=True)
class ClassSplit:
    seen_ids: frozenset
    novel_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "seen_ids", frozenset(self.seen_ids))
        object.__setattr__(self, "novel_ids", frozenset(self.novel_ids))
        overlap = self.seen_ids & self.novel_ids
        if overlap:
            raise ValueError(f"seen and novel ids overlap: {sorted(overlap)}")


def build_split(taxonomy: Sequence[Category], rule: str) -> ClassSplit:
    """``coco-voc``: VOC classes are seen.  ``lvis``: rare, common and the first
    305 frequent classes (ascending id) are seen, the remaining frequent ones novel."""
    ids = [c.id for c in taxonomy]
    if len(set(ids)) != len(ids):
        raise ValueError("taxonomy ids must be unique")
    if rule == "coco-voc":
        seen = {c.id for c in taxonomy if c.name in VOC_CLASSES_IN_COCO}
        return ClassSplit(seen, set(ids) - seen)
    if rule == "lvis":
        groups = {tag: sorted(c.id for c in taxonomy if c.frequency == tag) for tag in LVIS_COUNTS}
        counts = {tag: len(v) for tag, v in groups.items()}
        if counts != LVIS_COUNTS:
            warnings.warn(f"LVIS taxonomy has r/c/f counts {counts}, expected {LVIS_COUNTS}", stacklevel=2)
        frequent = groups["f"]
        seen = set(groups["r"]) | set(groups["c"]) | set(frequent[:LVIS_SEEN_FREQUENT])
        return ClassSplit(seen, set(frequent[LVIS_SEEN_FREQUENT:]))
    raise ValueError(f"unknown split rule {rule!r}")


def split_from_file(path) -> ClassSplit:
    """JSON object ``{"seen": [...], "novel": [...]}``."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        return ClassSplit({int(i) for i in data["seen"]}, {int(i) for i in data["novel"]})
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid split file: {exc!r}") from exc


def filter_annotations(annotations: Sequence[Annotation], split: ClassSplit, task) -> list[Annotation]:
    task = Task.parse(task)
    keep_ids = split.novel_ids if task is Task.NOVEL_RECALL else split.seen_ids
    known = split.seen_ids | split.novel_ids
    out = []
    for a in annotations:
        if a.category_id not in known:
            raise ValueError(f"annotation {a.id} has category id {a.category_id} outside the split")
        if a.category_id in keep_ids:
            out.append(a)
    return out


# --------------------------------------------------------------------------
# matching


def _as_boxes(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return items.astype(np.float64).reshape(-1, items.shape[-1] if items.ndim > 1 else 4)[:, :4]
    rows = []
    for it in items:
        if isinstance(it, Proposal):
            it = it.box
        elif isinstance(it, Annotation):
            it = it.box
        rows.append(it.as_tuple() if isinstance(it, BoxXYXY) else tuple(it)[:4])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def _greedy_match_ranks(ious: np.ndarray, threshold: float) -> np.ndarray:
    """Rank of every proposal that takes a ground truth under score-ordered greedy matching.

    Greedy matching over the top N proposals is a prefix of the full run, so
    ``(ranks < N).sum()`` is the matched count for any budget N.
    """
    P, G = ious.shape
    ranks = []
    if G == 0:
        return np.zeros(0, dtype=np.int64)
    free = np.ones(G, dtype=bool)
    hits = ious >= threshold
    for p in np.nonzero(hits.any(axis=1))[0]:
        cand = np.where(free & hits[p], ious[p], -1.0)
        g = int(np.argmax(cand))
        if cand[g] >= 0:
            free[g] = False
            ranks.append(p)
            if not free.any():
                break
    return np.array(ranks, dtype=np.int64)


def greedy_match_count(ious: np.ndarray, threshold: float) -> int:
    """Score-ordered greedy matching on a (proposals x gt) IoU matrix.

    Each proposal in turn takes the unmatched ground truth it overlaps most,
    provided that overlap reaches the threshold.
    """
    return int(_greedy_match_ranks(ious, threshold).size)


def max_match_count(ious: np.ndarray, threshold: float) -> int:
    """Maximum-cardinality matching of pairs with IoU >= threshold (augmenting paths)."""
    P, G = ious.shape
    adj = [np.nonzero(ious[p] >= threshold)[0].tolist() for p in range(P)]
    owner = [-1] * G

    def augment(p, seen):
        for g in adj[p]:
            if g in seen:
                continue
            seen.add(g)
            if owner[g] < 0 or augment(owner[g], seen):
                owner[g] = p
                return True
        return False

    return sum(augment(p, set()) for p in range(P))


def average_recall(proposals_per_image: Mapping, gt_per_image: Mapping, n: int,
                   thresholds: Sequence[float] = IOU_THRESHOLDS, matching: str = "greedy") -> Optional[float]:
    """Class-agnostic AR over the top ``n`` proposals per image.

    Proposal lists must already be sorted by descending score.  Images
    without ground truth are skipped; ``None`` when no image has any.
    ``matching="optimal"`` replaces score-ordered greedy matching with a
    maximum-cardinality matching, which upper-bounds it.
    """
    return average_recall_at(proposals_per_image, gt_per_image, [n], thresholds, matching)[n]


def average_recall_at(proposals_per_image: Mapping, gt_per_image: Mapping, ns: Sequence[int],
                      thresholds: Sequence[float] = IOU_THRESHOLDS,
                      matching: str = "greedy") -> dict[int, Optional[float]]:
    """:func:`average_recall` for several budgets at once, sharing one matching pass per image."""
    ns = [int(n) for n in ns]
    if any(n <= 0 for n in ns):
        raise ValueError("n must be positive")
    if matching not in ("greedy", "optimal"):
        raise ValueError(f"unknown matching {matching!r}")
    total = 0
    matched = np.zeros((len(ns), len(thresholds)), dtype=np.int64)
    for image_id, gt in gt_per_image.items():
        gt_boxes = _as_boxes(gt)
        if len(gt_boxes) == 0:
            continue
        total += len(gt_boxes)
        props = _as_boxes(proposals_per_image.get(image_id, []))[:max(ns)]
        if len(props) == 0:
            continue
        ious = pairwise_iou(props, gt_boxes)
        for k, t in enumerate(thresholds):
            if matching == "greedy":
                ranks = _greedy_match_ranks(ious, t)
                for i, n in enumerate(ns):
                    matched[i, k] += int((ranks < n).sum())
            else:
                for i, n in enumerate(ns):
                    matched[i, k] += max_match_count(ious[:n], t)
    if total == 0:
        return {n: None for n in ns}
    return {n: float(np.mean(matched[i] / total)) for i, n in enumerate(ns)}


def _category_ap(dets: list[tuple[float, int, np.ndarray]], gts: Mapping[int, np.ndarray],
                 thresholds: Sequence[float]) -> float:
    npos = sum(len(g) for g in gts.values())
    dets = sorted(dets, key=lambda d: -d[0])
    aps = []
    for t in thresholds:
        free = {img: np.ones(len(g), dtype=bool) for img, g in gts.items()}
        tp = np.zeros(len(dets))
        for k, (_, img, box) in enumerate(dets):
            g = gts.get(img)
            if g is None or len(g) == 0:
                continue
            ious = pairwise_iou(box[None], g)[0]
            cand = np.where(free[img] & (ious >= t), ious, -1.0)
            j = int(np.argmax(cand))
            if cand[j] >= 0:
                free[img][j] = False
                tp[k] = 1
        ctp = np.cumsum(tp)
        cfp = np.cumsum(1 - tp)
        recall = ctp / npos
        precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).eps)
        # precision envelope: best precision at any recall >= r
        envelope = np.maximum.accumulate(precision[::-1])[::-1] if len(precision) else precision
        idx = np.searchsorted(recall, RECALL_POINTS, side="left")
        sampled = np.array([envelope[i] if i < len(envelope) else 0.0 for i in idx])
        aps.append(sampled.mean())
    return float(np.mean(aps))


def average_precision(detections_per_image: Mapping[int, Sequence[Proposal]],
                      gt_per_image: Mapping[int, Sequence[Annotation]],
                      categories: Optional[Sequence[int]] = None,
                      thresholds: Sequence[float] = IOU_THRESHOLDS) -> tuple[Optional[float], dict[int, float]]:
    """COCO-style AP: 101-point interpolation, mean over IoU thresholds then categories.

    Only categories with at least one ground-truth box count.  Returns
    ``(None, {})`` when there are none.
    """
    gt_by_cat: dict[int, dict[int, list]] = {}
    for img, anns in gt_per_image.items():
        for a in anns:
            gt_by_cat.setdefault(a.category_id, {}).setdefault(img, []).append(a.box.as_tuple())
    if categories is not None:
        wanted = set(categories)
        gt_by_cat = {c: v for c, v in gt_by_cat.items() if c in wanted}
    dets_by_cat: dict[int, list] = {}
    for img in sorted(detections_per_image):
        for p in detections_per_image[img]:
            if p.class_id is not None and p.class_id in gt_by_cat:
                dets_by_cat.setdefault(p.class_id, []).append((p.score, img, np.array(p.box.as_tuple())))
    table = {}
    for c in sorted(gt_by_cat):
        gts = {img: np.array(b, dtype=np.float64) for img, b in gt_by_cat[c].items()}
        table[c] = _category_ap(dets_by_cat.get(c, []), gts, thresholds)
    if not table:
        return None, {}
    return float(np.mean(list(table.values()))), table


# --------------------------------------------------------------------------
# score histograms


@dataclass
class ScoreHistogram:
    edges: np.ndarray
    counts: np.ndarray
    skewness: Optional[float]
    n: int

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{lo:.4f},{hi:.4f},{int(c)}")
        return "\n".join(lines) + "\n"


def sample_skewness(values) -> Optional[float]:
    """m3 / m2**1.5 with population central moments; None below 3 samples or at zero spread."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 3:
        return None
    d = x - x.mean()
    m2 = np.mean(d ** 2)
    if m2 == 0:
        return None
    return float(np.mean(d ** 3) / m2 ** 1.5)


def score_histogram(scores, bins: int = 20) -> ScoreHistogram:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    x = np.asarray(scores, dtype=np.float64)
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValueError("scores must lie in [0, 1]")
    counts, edges = np.histogram(x, bins=bins, range=(0.0, 1.0))
    return ScoreHistogram(edges, counts, sample_skewness(x), int(x.size))


# --------------------------------------------------------------------------
# reports


@dataclass
class EvalReport:
    ar_at: dict[int, Optional[float]]
    ap: Optional[float]
    per_category_ap: dict[int, float] = field(default_factory=dict)
    num_images: int = 0
    num_gt: int = 0
    proposal_stats: dict[str, float] = field(default_factory=dict)
    split_sizes: Optional[tuple[int, int]] = None

    def lines(self) -> list[str]:
        out = []
        if self.split_sizes is not None:
            out.append(f"seen {self.split_sizes[0]} novel {self.split_sizes[1]}")
        out.append(f"images {self.num_images}")
        out.append(f"gt {self.num_gt}")
        for n in sorted(self.ar_at):
            out.append(f"AR{n} {_fmt(self.ar_at[n])}")
        out.append(f"AP {_fmt(self.ap)}")
        for k in sorted(self.proposal_stats):
            out.append(f"proposals_{k} {_fmt(self.proposal_stats[k])}")
        return out

    def to_dict(self) -> dict:
        return {
            "ar": {str(n): v for n, v in sorted(self.ar_at.items())},
            "ap": self.ap,
            "per_category_ap": {str(c): v for c, v in sorted(self.per_category_ap.items())},
            "num_images": self.num_images,
            "num_gt": self.num_gt,
            "proposal_stats": dict(sorted(self.proposal_stats.items())),
            "split_sizes": None if self.split_sizes is None else list(self.split_sizes),
        }


def _fmt(v) -> str:
    return "absent" if v is None else repr(round(float(v), 6))


def evaluate(proposals_per_image: Mapping[int, Sequence[Proposal]], annotations: AnnotationSet,
             split: Optional[ClassSplit] = None, task=Task.NOVEL_RECALL,
             ar_ns: Sequence[int] = AR_NS) -> EvalReport:
    """AR@N over the task's ground truth; AP too when proposals carry class ids."""
    task = Task.parse(task)
    anns = annotations.annotations
    if split is not None:
        anns = filter_annotations(anns, split, task)
    gt = annotations.by_image(anns)
    gt = {i: v for i, v in gt.items() if i in annotations.images}
    ar = average_recall_at(proposals_per_image, gt, ar_ns)
    ap, table = None, {}
    if any(p.class_id is not None for ps in proposals_per_image.values() for p in ps):
        ap, table = average_precision(proposals_per_image, gt)
    counts = [len(proposals_per_image.get(i, [])) for i in annotations.image_ids()]
    stats = {}
    if counts:
        stats = {"mean": float(np.mean(counts)), "min": float(min(counts)), "max": float(max(counts))}
    return EvalReport(
        ar_at=ar,
        ap=ap,
        per_category_ap=table,
        num_images=len(annotations.images),
        num_gt=len(anns),
        proposal_stats=stats,
        split_sizes=None if split is None else (len(split.seen_ids), len(split.novel_ids)),
    )
