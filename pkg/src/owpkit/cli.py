"""``owpkit`` command line.

Exit codes: 0 success, 1 internal error, 2 bad input or usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .assignment import assign_targets, compute_iou_targets, make_grids
from .dataio import (
    AnnotationSet,
    Config,
    DataError,
    config_from_dict,
    load_annotations,
    load_config,
    read_dense_maps,
    read_proposals,
    write_dense_maps,
    write_proposals,
)
from .evaluation import Task, build_split, evaluate, score_histogram, split_from_file
from .masking import objectness_maps, unknown_area_mask, unknown_object_mask
from .predictions import DensePredictions, LevelPredictions
from .proposals import PipelineParams, ScoringMode, run_pipeline
from .sampling import SamplingMode, build_objectness_training_set, sample_balance_stats
from .synth import NoiseSpec, random_annotations, synthesize_predictions


class UsageError(Exception):
    pass


# flag dest -> config field; flags left at None do not override the config
_OVERRIDES = {
    "center_radius": float,
    "iou_sampling_threshold": float,
    "positive_cut": float,
    "sampling_mode": str,
    "scoring_mode": str,
    "pre_nms_k": int,
    "pre_nms_threshold": float,
    "nms_iou": float,
    "post_nms_n": int,
    "post_nms_threshold": float,
    "unknown_mask_threshold": float,
    "mask_start_iteration": int,
    "mask_variant": str,
    "mask_objectness": str,
    "mask_nms_iou": float,
    "jobs": int,
}


def _add_config_flags(p: argparse.ArgumentParser, names) -> None:
    p.add_argument("--config", type=Path, help="JSON config file; flags override its values")
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=_OVERRIDES[name], default=None,
                       help=f"override config key {name}")


def _config(args) -> Config:
    cfg = load_config(args.config)
    updates = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k, None) is not None}
    if updates:
        cfg = config_from_dict({**cfg.to_dict(), **updates}, "command line")
    return cfg


def _image_id_from(path: Path, explicit):
    if explicit is not None:
        return explicit
    try:
        return int(path.stem)
    except ValueError:
        raise UsageError(f"cannot infer image id from {path.name}; pass --image-id") from None


def _pred_files(path: Path) -> list[Path]:
    if path.is_dir():
        files = sorted(path.glob("*.owpd"), key=lambda p: (len(p.stem), p.stem))
        if not files:
            raise UsageError(f"no .owpd files in {path}")
        return files
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    return [path]


def _check_image(ann: AnnotationSet, image_id: int) -> None:
    if image_id not in ann.images:
        raise UsageError(f"image id {image_id} not found in annotations")


def _assignment_for(ann: AnnotationSet, image_id: int, cfg: Config):
    img = ann.images[image_id]
    levels = cfg.levels()
    grids = make_grids(img.height, img.width, levels)
    return assign_targets([a.box for a in ann.for_image(image_id)], levels, grids, cfg.center_radius)


def _check_grid(preds: DensePredictions, res) -> None:
    if [lv.shape for lv in preds.levels] != [(g.height, g.width) for g in res.grids]:
        raise UsageError("prediction map shapes do not match the annotation/config grids")


# --------------------------------------------------------------------------
# subcommands


def cmd_assign(args) -> int:
    cfg = _config(args)
    ann = load_annotations(args.annotations)
    _check_image(ann, args.image_id)
    res = _assignment_for(ann, args.image_id, cfg)
    anns = ann.for_image(args.image_id)
    class_index = {c: k for k, c in enumerate(ann.category_ids())}
    levels = []
    for lv in res.levels:
        H, W = lv.matched.shape
        onehot = np.zeros((H, W, len(class_index)))
        rr, cc = np.nonzero(lv.foreground)
        for r, c in zip(rr, cc):
            onehot[r, c, class_index[anns[lv.matched[r, c]].category_id]] = 1.0
        # iou channel carries the center-sampling flag
        levels.append(LevelPredictions(lv.grid.stride, onehot, lv.regression, lv.centerness,
                                       lv.center_sampled.astype(np.float64)))
    write_dense_maps(args.out, DensePredictions(levels))
    fg = res.foreground_count()
    print(f"foreground {fg}")
    print(f"background {res.location_count() - fg}")
    print(f"center_sampled {res.center_sampled_count()}")
    return 0


def cmd_sample_stats(args) -> int:
    cfg = _config(args)
    ann = load_annotations(args.annotations)
    _check_image(ann, args.image_id)
    res = _assignment_for(ann, args.image_id, cfg)
    if args.objectness == "iou":
        if args.preds is None:
            raise UsageError("--preds is required for IoU objectness targets")
        preds = read_dense_maps(args.preds)
        _check_grid(preds, res)
        targets = compute_iou_targets(res, [lv.regression for lv in preds.levels])
    else:
        targets = [lv.centerness for lv in res.levels]
    mode = SamplingMode.parse(cfg.sampling_mode)
    ts = build_objectness_training_set(res, targets, mode, cfg.iou_sampling_threshold)
    st = sample_balance_stats(ts, cfg.positive_cut)
    print(f"mode {mode.value}")
    print(f"samples {len(ts)}")
    print(f"positives {st.positives}")
    print(f"negatives {st.negatives}")
    print(f"ratio {st.ratio}")
    return 0


def cmd_score(args) -> int:
    cfg = _config(args)
    mode = ScoringMode.parse(args.mode or cfg.scoring_mode)
    params = PipelineParams.from_config(cfg)
    files = _pred_files(args.preds)
    if args.image_id is not None and len(files) > 1:
        raise UsageError("--image-id only applies to a single prediction file")
    ids = [_image_id_from(f, args.image_id) for f in files]
    class_ids = None
    if args.annotations is not None:
        class_ids = load_annotations(args.annotations).category_ids()

    def work(f):
        return run_pipeline(read_dense_maps(f), mode, params, class_ids)

    jobs = cfg.jobs or os.cpu_count() or 1
    with ThreadPoolExecutor(jobs) as ex:
        results = list(ex.map(work, files))
    per_image = dict(zip(ids, results))
    write_proposals(args.out, per_image)
    print(f"images {len(per_image)}")
    print(f"proposals {sum(len(v) for v in results)}")
    return 0


def _split_for(spec: str, ann: AnnotationSet):
    if spec == "coco-voc":
        return build_split(ann.categories, "coco-voc")
    if spec == "lvis":
        return build_split(ann.categories, "lvis")
    if spec.startswith("file:"):
        return split_from_file(spec[5:])
    raise UsageError(f"unknown split {spec!r}; expected coco-voc, lvis or file:PATH")


def cmd_eval(args) -> int:
    ann = load_annotations(args.gt)
    props = read_proposals(args.proposals)
    split = _split_for(args.split, ann)
    ar_ns = args.ar_n or [10, 100, 300]
    report = evaluate(props, ann, split, Task.parse(args.task), sorted(set(ar_ns)))
    for line in report.lines():
        print(line)
    out = args.report or args.proposals.with_suffix(".eval.json")
    Path(out).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    if (args.annotations is None) == (args.random is None):
        raise UsageError("pass exactly one of --annotations or --random")
    out = Path(args.out)
    (out / "preds").mkdir(parents=True, exist_ok=True)
    if args.annotations is not None:
        ann = load_annotations(args.annotations)
    else:
        ann = random_annotations(args.random, seed=args.seed, config=cfg)
        ann.save(out / "annotations.json")
    noise = NoiseSpec(args.noise, args.objectness_noise, seed=args.seed)

    def work(image_id):
        preds = synthesize_predictions(ann, image_id, cfg, noise)
        write_dense_maps(out / "preds" / f"{image_id}.owpd", preds)

    jobs = cfg.jobs or os.cpu_count() or 1
    with ThreadPoolExecutor(jobs) as ex:
        list(ex.map(work, ann.image_ids()))
    print(f"images {len(ann.images)}")
    print(f"annotations {len(ann.annotations)}")
    return 0


def cmd_hist(args) -> int:
    props = read_proposals(args.proposals)
    scores = [p.score for ps in props.values() for p in ps]
    h = score_histogram(scores, args.bins)
    table = h.to_csv()
    sys.stdout.write(table)
    print(f"n {h.n}")
    print(f"skewness {'absent' if h.skewness is None else repr(round(h.skewness, 6))}")
    if args.csv is not None:
        Path(args.csv).write_text(table)
    return 0


def cmd_mask_stats(args) -> int:
    cfg = _config(args)
    ann = load_annotations(args.annotations)
    files = _pred_files(args.preds)
    if args.image_id is not None and len(files) > 1:
        raise UsageError("--image-id only applies to a single prediction file")
    total = fg_total = bg_total = 0
    for f in files:
        image_id = _image_id_from(f, args.image_id)
        _check_image(ann, image_id)
        preds = read_dense_maps(f)
        res = _assignment_for(ann, image_id, cfg)
        _check_grid(preds, res)
        obj = objectness_maps(preds, cfg.mask_objectness)
        if cfg.mask_variant == "pixel":
            mask = unknown_object_mask(obj, res, cfg.unknown_mask_threshold)
        else:
            mask = unknown_area_mask(obj, [lv.regression for lv in preds.levels], res,
                                     cfg.unknown_mask_threshold, cfg.mask_nms_iou)
        total += mask.count()
        fg = res.foreground_count()
        fg_total += fg
        bg_total += res.location_count() - fg
    print(f"variant {cfg.mask_variant}")
    print(f"threshold {cfg.unknown_mask_threshold}")
    print(f"foreground {fg_total}")
    print(f"background {bg_total}")
    print(f"excluded {total}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owpkit", description="One-stage open-world proposal toolkit.",
                                     epilog="Exit codes: 0 success, 1 internal error, 2 bad input or usage.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("assign", help="write dense assignment targets for one image")
    p.add_argument("--annotations", type=Path, required=True, help="COCO-style annotation JSON")
    p.add_argument("--image-id", type=int, required=True, help="image to process")
    p.add_argument("--out", type=Path, required=True, help="dense map file to write")
    _add_config_flags(p, ["center_radius"])
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("sample-stats", help="objectness training-set balance for one image")
    p.add_argument("--annotations", type=Path, required=True, help="COCO-style annotation JSON")
    p.add_argument("--image-id", type=int, required=True, help="image to process")
    p.add_argument("--preds", type=Path, help="dense map file supplying predicted regression")
    p.add_argument("--objectness", choices=["iou", "centerness"], default="iou",
                   help="which objectness target to sample")
    p.add_argument("--mode", dest="sampling_mode", default=None, help="fcos, cs_is or all")
    _add_config_flags(p, ["center_radius", "iou_sampling_threshold", "positive_cut"])
    p.set_defaults(func=cmd_sample_stats)

    p = sub.add_parser("score", help="run the proposal pipeline over dense map files")
    p.add_argument("--preds", type=Path, required=True, help="dense map file or directory of <image_id>.owpd")
    p.add_argument("--mode", default=None,
                   help="centerness, iou, geomean, logits-centerness or logits-iou")
    p.add_argument("--out", type=Path, required=True, help="proposal JSON to write")
    p.add_argument("--image-id", type=int, default=None, help="image id for a single file (default: file stem)")
    p.add_argument("--annotations", type=Path, default=None,
                   help="annotation file mapping class channels to category ids (logit modes)")
    _add_config_flags(p, ["pre_nms_k", "pre_nms_threshold", "nms_iou", "post_nms_n",
                          "post_nms_threshold", "jobs"])
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="open-world AR@N / AP evaluation")
    p.add_argument("--gt", type=Path, required=True, help="ground-truth annotation JSON")
    p.add_argument("--proposals", type=Path, required=True, help="proposal / detection JSON")
    p.add_argument("--split", default="coco-voc", help="coco-voc, lvis or file:PATH")
    p.add_argument("--task", choices=[t.value for t in Task], default=Task.NOVEL_RECALL.value,
                   help="novel-recall keeps novel GT, base-precision keeps seen GT")
    p.add_argument("--ar-n", type=int, action="append", help="proposal budget N; repeatable")
    p.add_argument("--report", type=Path, default=None, help="machine-readable summary path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="synthesize dense predictions from ground truth")
    p.add_argument("--annotations", type=Path, default=None, help="annotation JSON to synthesize from")
    p.add_argument("--random", type=int, default=None, help="generate N random images instead")
    p.add_argument("--noise", type=float, default=0.0, help="regression sigma")
    p.add_argument("--objectness-noise", type=float, default=0.0, help="sigma of the IoU/centerness score noise")
    p.add_argument("--seed", type=int, default=0, help="64-bit seed for scenes and noise")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_config_flags(p, ["center_radius", "jobs"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hist", help="score histogram and skewness of a proposal file")
    p.add_argument("--proposals", type=Path, required=True, help="proposal JSON")
    p.add_argument("--bins", type=int, default=20, help="equal-width bins over [0, 1]")
    p.add_argument("--csv", type=Path, default=None, help="also write the table here")
    p.set_defaults(func=cmd_hist)

    p = sub.add_parser("mask-stats", help="count background locations removed by unknown masking")
    p.add_argument("--preds", type=Path, required=True, help="dense map file or directory of <image_id>.owpd")
    p.add_argument("--annotations", type=Path, required=True, help="COCO-style annotation JSON")
    p.add_argument("--image-id", type=int, default=None, help="image id for a single file (default: file stem)")
    p.add_argument("--threshold", dest="unknown_mask_threshold", type=float, default=None,
                   help="objectness above which background is masked (config unknown_mask_threshold)")
    p.add_argument("--variant", dest="mask_variant", choices=["pixel", "area"], default=None,
                   help="pixel-level or box-level masking (config mask_variant)")
    p.add_argument("--objectness", dest="mask_objectness", choices=["iou", "centerness", "geomean"],
                   default=None, help="objectness map driving the mask (config mask_objectness)")
    _add_config_flags(p, ["center_radius", "mask_nms_iou"])
    p.set_defaults(func=cmd_mask_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits 2 on usage errors
    try:
        return args.func(args)
    except (UsageError, DataError, FileNotFoundError, IsADirectoryError, KeyError, ValueError) as exc:
        print(f"owpkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"owpkit {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
