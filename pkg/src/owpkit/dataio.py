"""Annotation JSON, dense-map binary container, config and proposal files."""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .assignment import DEFAULT_CENTER_RADIUS, DEFAULT_RANGES, DEFAULT_STRIDES, FpnLevelSpec, validate_levels
from .geometry import BoxXYXY, GeometryError
from .masking import DEFAULT_MASK_START, DEFAULT_MASK_THRESHOLD, OBJECTNESS_SOURCES
from .predictions import DensePredictions, LevelPredictions
from .proposals import (
    NMS_IOU,
    POST_NMS_N_COCO,
    POST_NMS_THRESHOLD,
    PRE_NMS_K,
    PRE_NMS_THRESHOLD,
    Proposal,
    ScoringMode,
)
from .sampling import IOU_SAMPLING_THRESHOLD, POSITIVE_CUT, SamplingMode


class DataError(ValueError):
    """Malformed input file; the message names the file and the offending record."""


# --------------------------------------------------------------------------
# annotations


@dataclass(frozen=True)
class Category:
    id: int
    name: str
    frequency: Optional[str] = None


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str = ""


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    box: BoxXYXY


@dataclass
class AnnotationSet:
    images: dict[int, ImageInfo]
    annotations: list[Annotation]
    categories: list[Category]

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.images), len(self.annotations), len(self.categories))

    def image_ids(self) -> list[int]:
        return sorted(self.images)

    def category_ids(self) -> list[int]:
        return sorted(c.id for c in self.categories)

    def for_image(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]

    def by_image(self, annotations: Optional[Sequence[Annotation]] = None) -> dict[int, list[Annotation]]:
        out: dict[int, list[Annotation]] = {i: [] for i in self.image_ids()}
        for a in self.annotations if annotations is None else annotations:
            out.setdefault(a.image_id, []).append(a)
        return out

    def to_dict(self) -> dict:
        cats = []
        for c in self.categories:
            d = {"id": c.id, "name": c.name}
            if c.frequency is not None:
                d["frequency"] = c.frequency
            cats.append(d)
        return {
            "images": [asdict(self.images[i]) for i in self.image_ids()],
            "annotations": [
                {
                    "id": a.id,
                    "image_id": a.image_id,
                    "category_id": a.category_id,
                    "bbox": [a.box.x1, a.box.y1, a.box.width, a.box.height],
                }
                for a in self.annotations
            ],
            "categories": cats,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))


def annotations_from_dict(data: Any, source: str = "<memory>") -> AnnotationSet:
    if not isinstance(data, dict):
        raise DataError(f"{source}: top level must be a JSON object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(data.get(key), list):
            raise DataError(f"{source}: missing or non-array field {key!r}")
    where = "images"
    try:
        images = {}
        for k, rec in enumerate(data["images"]):
            where = f"images[{k}]"
            img = ImageInfo(int(rec["id"]), int(rec["width"]), int(rec["height"]), str(rec.get("file_name", "")))
            if img.width <= 0 or img.height <= 0:
                raise DataError(f"{source}: images[{k}] (id {img.id}) has non-positive size")
            if img.id in images:
                raise DataError(f"{source}: duplicate image id {img.id}")
            images[img.id] = img
        categories = []
        seen_cats = set()
        for k, rec in enumerate(data["categories"]):
            where = f"categories[{k}]"
            cat = Category(int(rec["id"]), str(rec.get("name", rec["id"])), rec.get("frequency"))
            if cat.id in seen_cats:
                raise DataError(f"{source}: duplicate category id {cat.id}")
            seen_cats.add(cat.id)
            categories.append(cat)
        annotations = []
        for k, rec in enumerate(data["annotations"]):
            where = f"annotations[{k}]"
            ann_id = int(rec.get("id", k))
            image_id = int(rec["image_id"])
            cat_id = int(rec["category_id"])
            if image_id not in images:
                raise DataError(f"{source}: annotations[{k}] (id {ann_id}) references missing image id {image_id}")
            if cat_id not in seen_cats:
                raise DataError(f"{source}: annotations[{k}] (id {ann_id}) references missing category id {cat_id}")
            x, y, w, h = (float(v) for v in rec["bbox"])
            if not (w > 0 and h > 0):
                raise DataError(f"{source}: annotations[{k}] (id {ann_id}) has non-positive box {rec['bbox']}")
            annotations.append(Annotation(ann_id, image_id, cat_id, BoxXYXY(x, y, x + w, y + h, cat_id)))
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{source}: {where}: malformed record: {exc!r}") from exc
    return AnnotationSet(images, annotations, categories)


def load_annotations(path) -> AnnotationSet:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return annotations_from_dict(data, str(path))


# --------------------------------------------------------------------------
# dense map container
#
# magic b"OWPD", u32 version, u32 level count; per level u32 stride, H, W, C
# followed by float32 LE payloads in the order classification (H*W*C),
# regression (H*W*4), centerness (H*W), iou (H*W), row-major channels-last.

MAGIC = b"OWPD"
VERSION = 1
_U32 = struct.Struct("<I")
_LEVEL = struct.Struct("<4I")


def dense_maps_to_bytes(preds: DensePredictions) -> bytes:
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(preds.levels))]
    for lv in preds.levels:
        lv.validate()
        H, W = lv.shape
        parts.append(_LEVEL.pack(lv.stride, H, W, lv.num_classes))
        for arr in (lv.classification, lv.regression, lv.centerness, lv.iou):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def dense_maps_from_bytes(buf: bytes, source: str = "<memory>") -> DensePredictions:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise DataError(f"{source}: bad magic, not a dense map file")
    version = _U32.unpack_from(buf, 4)[0]
    if version != VERSION:
        raise DataError(f"{source}: unsupported version {version}")
    count = _U32.unpack_from(buf, 8)[0]
    pos = 12
    levels = []
    for k in range(count):
        if pos + _LEVEL.size > len(buf):
            raise DataError(f"{source}: truncated header for level {k}")
        stride, H, W, C = _LEVEL.unpack_from(buf, pos)
        pos += _LEVEL.size
        maps = []
        for shape in ((H, W, C), (H, W, 4), (H, W), (H, W)):
            n = int(np.prod(shape)) * 4
            if pos + n > len(buf):
                raise DataError(f"{source}: truncated payload in level {k}")
            maps.append(np.frombuffer(buf, dtype="<f4", count=n // 4, offset=pos).reshape(shape).astype(np.float64))
            pos += n
        levels.append(LevelPredictions(stride, *maps))
    if pos != len(buf):
        raise DataError(f"{source}: {len(buf) - pos} trailing bytes after payload")
    return DensePredictions(levels)


def write_dense_maps(path, preds: DensePredictions) -> None:
    Path(path).write_bytes(dense_maps_to_bytes(preds))


def read_dense_maps(path) -> DensePredictions:
    path = Path(path)
    return dense_maps_from_bytes(path.read_bytes(), str(path))


# --------------------------------------------------------------------------
# configuration


def _ranges_default():
    return [[lo, hi] for lo, hi in DEFAULT_RANGES]


@dataclass
class Config:
    strides: list = field(default_factory=lambda: list(DEFAULT_STRIDES))
    ranges: list = field(default_factory=_ranges_default)
    center_radius: float = DEFAULT_CENTER_RADIUS
    iou_sampling_threshold: float = IOU_SAMPLING_THRESHOLD
    positive_cut: float = POSITIVE_CUT
    sampling_mode: str = SamplingMode.CS_IS.value
    scoring_mode: str = ScoringMode.IOU.value
    pre_nms_k: int = PRE_NMS_K
    pre_nms_threshold: float = PRE_NMS_THRESHOLD
    nms_iou: float = NMS_IOU
    post_nms_n: int = POST_NMS_N_COCO
    post_nms_threshold: float = POST_NMS_THRESHOLD
    class_agnostic_nms: Optional[bool] = None
    unknown_mask_threshold: float = DEFAULT_MASK_THRESHOLD
    mask_start_iteration: int = DEFAULT_MASK_START
    mask_variant: str = "pixel"
    mask_objectness: str = "iou"
    mask_nms_iou: Optional[float] = None
    jobs: Optional[int] = None

    def levels(self) -> list[FpnLevelSpec]:
        return [FpnLevelSpec(int(s), float(lo), float(hi)) for s, (lo, hi) in zip(self.strides, self.ranges)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ranges"] = [[lo, None if math.isinf(hi) else hi] for lo, hi in self.ranges]
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


_INT_FIELDS = {"pre_nms_k", "post_nms_n", "mask_start_iteration"}
_FLOAT_FIELDS = {"center_radius", "iou_sampling_threshold", "positive_cut", "pre_nms_threshold",
                 "nms_iou", "post_nms_threshold", "unknown_mask_threshold"}
_STR_FIELDS = {"sampling_mode", "scoring_mode", "mask_variant", "mask_objectness"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _parse_bound(v, where):
    if v is None or v == "inf":
        return math.inf
    if not _is_real(v):
        raise DataError(f"{where}: range bound {v!r} is not a number")
    return float(v)


def config_from_dict(data: Mapping, source: str = "<memory>") -> Config:
    if not isinstance(data, Mapping):
        raise DataError(f"{source}: config must be a JSON object")
    known = {f.name for f in fields(Config)}
    kwargs = {}
    for key, value in data.items():
        where = f"{source}: {key}"
        if key not in known:
            warnings.warn(f"{source}: unknown config key {key!r} ignored", stacklevel=2)
            continue
        if key in _INT_FIELDS:
            if not _is_int(value):
                raise DataError(f"{where} must be an integer, got {value!r}")
        elif key in _FLOAT_FIELDS:
            if not _is_real(value):
                raise DataError(f"{where} must be a number, got {value!r}")
            value = float(value)
        elif key in _STR_FIELDS:
            if not isinstance(value, str):
                raise DataError(f"{where} must be a string, got {value!r}")
        elif key == "strides":
            if not isinstance(value, list) or not all(_is_int(v) for v in value):
                raise DataError(f"{where} must be an array of integers")
        elif key == "ranges":
            if not isinstance(value, list) or not all(isinstance(r, list) and len(r) == 2 for r in value):
                raise DataError(f"{where} must be an array of [min, max] pairs")
            value = [[_parse_bound(lo, where), _parse_bound(hi, where)] for lo, hi in value]
        elif key == "class_agnostic_nms":
            if value is not None and not isinstance(value, bool):
                raise DataError(f"{where} must be a boolean or null")
        elif key == "mask_nms_iou":
            if value is not None and not _is_real(value):
                raise DataError(f"{where} must be a number or null")
        elif key == "jobs":
            if value is not None and not (_is_int(value) and value > 0):
                raise DataError(f"{where} must be a positive integer or null")
        kwargs[key] = value
    cfg = Config(**kwargs)
    validate_config(cfg, source)
    return cfg


def validate_config(cfg: Config, source: str = "<memory>") -> None:
    try:
        if len(cfg.strides) != len(cfg.ranges):
            raise ValueError("strides and ranges must have the same length")
        validate_levels(cfg.levels())
        SamplingMode.parse(cfg.sampling_mode)
        ScoringMode.parse(cfg.scoring_mode)
    except ValueError as exc:
        raise DataError(f"{source}: {exc}") from exc
    if cfg.mask_variant not in ("pixel", "area"):
        raise DataError(f"{source}: mask_variant must be 'pixel' or 'area'")
    if cfg.mask_objectness not in OBJECTNESS_SOURCES:
        raise DataError(f"{source}: mask_objectness must be one of {OBJECTNESS_SOURCES}")
    for name in ("iou_sampling_threshold", "positive_cut", "unknown_mask_threshold"):
        if not 0 < getattr(cfg, name) < 1:
            raise DataError(f"{source}: {name} must lie in (0, 1)")
    if cfg.pre_nms_k <= 0 or cfg.post_nms_n <= 0:
        raise DataError(f"{source}: pre_nms_k and post_nms_n must be positive")
    if cfg.center_radius <= 0:
        raise DataError(f"{source}: center_radius must be positive")
    if cfg.mask_start_iteration < 0:
        raise DataError(f"{source}: mask_start_iteration must be non-negative")


def load_config(path=None) -> Config:
    """Read a JSON config; ``None`` returns the defaults."""
    if path is None:
        return Config()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(data, str(path))


# --------------------------------------------------------------------------
# proposal / detection results


def proposals_to_records(per_image: Mapping[int, Sequence[Proposal]]) -> list[dict]:
    records = []
    for image_id in sorted(per_image):
        for p in per_image[image_id]:
            rec = {
                "image_id": int(image_id),
                "bbox": [p.box.x1, p.box.y1, p.box.x2 - p.box.x1, p.box.y2 - p.box.y1],
                "score": float(p.score),
            }
            if p.class_id is not None:
                rec["category_id"] = int(p.class_id)
            records.append(rec)
    return records


def write_proposals(path, per_image: Mapping[int, Sequence[Proposal]]) -> None:
    Path(path).write_text(json.dumps(proposals_to_records(per_image)))


def read_proposals(path) -> dict[int, list[Proposal]]:
    """Per-image proposals, each list sorted by descending score (file order breaks ties)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: detection results must be a JSON array")
    out: dict[int, list[Proposal]] = {}
    for k, rec in enumerate(data):
        try:
            x, y, w, h = (float(v) for v in rec["bbox"])
            cid = rec.get("category_id")
            p = Proposal(BoxXYXY(x, y, x + w, y + h), float(rec["score"]), None if cid is None else int(cid))
            out.setdefault(int(rec["image_id"]), []).append(p)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: record {k}: {exc!r}") from exc
    for props in out.values():
        props.sort(key=lambda p: -p.score)
    return out
