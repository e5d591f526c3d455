import numpy as np
import pytest

from owpkit.assignment import assign_targets, make_grids
from owpkit.dataio import AnnotationSet, Config, ImageInfo
from owpkit.evaluation import build_split, coco_categories, pairwise_iou
from owpkit.geometry import iou_ltrb_array
from owpkit.proposals import ScoringMode, run_pipeline
from owpkit.synth import NoiseSpec, foreground_iou_scores, random_annotations, run_scenario, synthesize_predictions


@pytest.fixture(scope="module")
def scenes():
    return random_annotations(8, seed=5)


def test_generator_constraints(scenes):
    cfg = Config()
    assert len(scenes.images) == 8
    for image_id in scenes.image_ids():
        img = scenes.images[image_id]
        assert 320 <= img.width <= 640 and 320 <= img.height <= 640
        anns = scenes.for_image(image_id)
        assert 1 <= len(anns) <= 20
        boxes = np.array([a.box.as_tuple() for a in anns])
        assert (boxes == np.round(boxes)).all()
        assert (boxes[:, :2] >= 0).all() and (boxes[:, 2] <= img.width).all() and (boxes[:, 3] <= img.height).all()
        m = pairwise_iou(boxes, boxes)
        np.fill_diagonal(m, 0)
        assert m.max() <= 0.3
        res = assign_targets(boxes, cfg.levels(), make_grids(img.height, img.width, cfg.levels()))
        owned = set()
        for lv in res.levels:
            owned |= set(lv.matched[lv.foreground].tolist())
        assert owned == set(range(len(boxes)))


def test_generator_deterministic(scenes):
    assert random_annotations(8, seed=5).to_dict() == scenes.to_dict()
    assert random_annotations(8, seed=6).to_dict() != scenes.to_dict()


def test_zero_noise_maps(scenes):
    cfg = Config()
    image_id = scenes.image_ids()[0]
    preds = synthesize_predictions(scenes, image_id, cfg, NoiseSpec())
    img = scenes.images[image_id]
    res = assign_targets([a.box for a in scenes.for_image(image_id)], cfg.levels(),
                         make_grids(img.height, img.width, cfg.levels()))
    for lv, p in zip(res.levels, preds.levels):
        assert (p.iou[lv.foreground] == 1.0).all()
        np.testing.assert_array_equal(p.regression[lv.foreground], lv.regression[lv.foreground])
        assert (p.iou[~lv.foreground] < 0.1).all()
    preds.validate()


def test_iou_branch_consistency(scenes):
    cfg = Config()
    image_id = scenes.image_ids()[1]
    preds = synthesize_predictions(scenes, image_id, cfg, NoiseSpec(regression_sigma=0.2, seed=3))
    img = scenes.images[image_id]
    res = assign_targets([a.box for a in scenes.for_image(image_id)], cfg.levels(),
                         make_grids(img.height, img.width, cfg.levels()))
    for lv, p in zip(res.levels, preds.levels):
        fg = lv.foreground
        np.testing.assert_array_equal(p.iou[fg], iou_ltrb_array(p.regression[fg], lv.regression[fg]))


def test_same_seed_bit_identical(scenes):
    noise = NoiseSpec(0.1, 0.05, seed=9)
    a = synthesize_predictions(scenes, 3, Config(), noise)
    b = synthesize_predictions(scenes, 3, Config(), noise)
    for x, y in zip(a.levels, b.levels):
        for name in ("classification", "regression", "centerness", "iou"):
            np.testing.assert_array_equal(getattr(x, name), getattr(y, name))
    with pytest.raises(KeyError):
        synthesize_predictions(scenes, 999, Config(), noise)


def test_zero_noise_proposals_equal_gt(scenes):
    image_id = scenes.image_ids()[2]
    preds = synthesize_predictions(scenes, image_id, Config(), NoiseSpec())
    props = run_pipeline(preds, ScoringMode.IOU)
    got = sorted(p.box.as_tuple() for p in props)
    want = sorted(a.box.as_tuple() for a in scenes.for_image(image_id))
    assert got == want


def test_scenario(scenes):
    cfg = Config()
    split = build_split(coco_categories(), "coco-voc")
    rep = run_scenario(scenes, None, cfg, NoiseSpec(), modes=["iou", "logits-iou"])
    assert rep[ScoringMode.IOU].ar_at[100] == 1.0
    assert rep[ScoringMode.LOGITS_IOU].ap == pytest.approx(1.0)
    threaded = run_scenario(scenes, split, cfg, NoiseSpec(0.1, seed=2), jobs=4)
    serial = run_scenario(scenes, split, cfg, NoiseSpec(0.1, seed=2), jobs=1)
    assert threaded[ScoringMode.IOU].to_dict() == serial[ScoringMode.IOU].to_dict()
    empty = AnnotationSet({1: ImageInfo(1, 64, 64)}, [], coco_categories())
    rep = run_scenario(empty, None, cfg, NoiseSpec())[ScoringMode.IOU]
    assert rep.ar_at[100] is None and rep.ap is None


def test_iou_scores_cluster_high(scenes):
    vals = foreground_iou_scores(scenes, Config(), NoiseSpec(regression_sigma=0.1, seed=1))
    assert vals.size >= 1000
    assert np.median(vals) > 0.85


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseSpec(regression_sigma=-1)
    with pytest.raises(ValueError):
        NoiseSpec(classification_confidence=0)
    with pytest.raises(ValueError):
        NoiseSpec(background_score_level=1.0)
