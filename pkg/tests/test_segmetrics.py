import numpy as np
import pytest

from sprayeval.errors import ContractError
from sprayeval.segmetrics import (ConfusionTally, dice_per_class, iou_per_class,
                                  micro_f1, miou, pixel_accuracy_per_class,
                                  tally)


def _brute_force_counts(pred, gt, num_classes=7):
    tp = np.zeros(num_classes, dtype=np.int64)
    fp = np.zeros(num_classes, dtype=np.int64)
    fn = np.zeros(num_classes, dtype=np.int64)
    for r in range(pred.shape[0]):
        for c in range(pred.shape[1]):
            p, g = int(pred[r, c]), int(gt[r, c])
            if p == g:
                tp[p] += 1
            else:
                fp[p] += 1
                fn[g] += 1
    return tp, fp, fn


def _random_pair(seed, shape=(16, 16), num_classes=7):
    rng = np.random.default_rng(seed)
    pred = rng.integers(0, num_classes, size=shape).astype(np.uint8)
    gt = rng.integers(0, num_classes, size=shape).astype(np.uint8)
    return pred, gt


def test_perfect_prediction_has_no_errors():
    _, gt = _random_pair(0)
    t = tally(gt, gt)
    assert (t.fp == 0).all() and (t.fn == 0).all()
    dice = dice_per_class(t)
    present = t.tp > 0
    assert np.allclose(dice[present], 1.0)
    assert micro_f1(t) == pytest.approx(1.0)
    assert miou(t) == pytest.approx(1.0)


def test_tally_2x2_hand_count():
    pred = np.array([[1, 1], [2, 0]], dtype=np.uint8)
    gt = np.array([[1, 2], [2, 2]], dtype=np.uint8)
    t = tally(pred, gt)
    # per-pixel count: (1,1) TP1; (1,2) FP1+FN2; (2,2) TP2; (0,2) FP0+FN2
    assert t.tp[1] == 1 and t.fp[1] == 1 and t.fn[1] == 0
    assert t.tp[2] == 1 and t.fp[2] == 0 and t.fn[2] == 2
    assert t.fp[0] == 1 and t.tp[0] == 0 and t.fn[0] == 0
    iou = iou_per_class(t)
    assert iou[1] == pytest.approx(0.5)
    assert iou[2] == pytest.approx(1.0 / 3.0)
    assert iou[0] == pytest.approx(0.0)
    # foreground classes present in GT or prediction: {1, 2}
    assert miou(t) == pytest.approx((0.5 + 1.0 / 3.0) / 2.0)


def test_tally_matches_brute_force_loop():
    for seed in range(20):
        pred, gt = _random_pair(seed)
        t = tally(pred, gt)
        tp, fp, fn = _brute_force_counts(pred, gt)
        assert np.array_equal(t.tp, tp)
        assert np.array_equal(t.fp, fp)
        assert np.array_equal(t.fn, fn)


def test_tally_dimension_mismatch():
    with pytest.raises(ContractError):
        tally(np.zeros((2, 2), dtype=np.uint8), np.zeros((2, 3), dtype=np.uint8))


def test_dice_half_covered_object():
    # prediction covers one of two GT pixels with no false positives
    t = ConfusionTally(tp=np.array([0, 1]), fp=np.array([0, 0]), fn=np.array([0, 1]))
    assert dice_per_class(t)[1] == pytest.approx(2.0 / 3.0)


def test_absent_class_is_not_applicable():
    t = ConfusionTally(tp=np.array([4, 0]), fp=np.array([0, 0]), fn=np.array([0, 0]))
    assert np.isnan(dice_per_class(t)[1])
    assert np.isnan(iou_per_class(t)[1])
    assert np.isnan(pixel_accuracy_per_class(t)[1])


def test_pixel_accuracy_is_recall_form():
    t = ConfusionTally(tp=np.array([0, 3]), fp=np.array([0, 5]), fn=np.array([0, 1]))
    assert pixel_accuracy_per_class(t)[1] == pytest.approx(0.75)


def test_pixel_accuracy_matches_brute_force_recall():
    pred, gt = _random_pair(42)
    t = tally(pred, gt)
    acc = pixel_accuracy_per_class(t)
    for c in range(7):
        gt_count = int((gt == c).sum())
        if gt_count == 0:
            assert np.isnan(acc[c])
        else:
            correct = int(((pred == c) & (gt == c)).sum())
            assert acc[c] == pytest.approx(correct / gt_count)


def test_micro_f1_zero_when_everything_is_background_prediction():
    pred = np.zeros((4, 4), dtype=np.uint8)
    gt = np.ones((4, 4), dtype=np.uint8)
    assert micro_f1(tally(pred, gt)) == 0.0


def test_micro_f1_matches_formula_from_brute_force():
    for seed in range(10):
        pred, gt = _random_pair(seed + 100)
        t = tally(pred, gt)
        tp, fp, fn = _brute_force_counts(pred, gt)
        stp, sfp, sfn = tp[1:].sum(), fp[1:].sum(), fn[1:].sum()
        precision = stp / (stp + sfp)
        recall = stp / (stp + sfn)
        expected = 2 * precision * recall / (precision + recall) \
            if precision + recall else 0.0
        assert micro_f1(t) == pytest.approx(expected, abs=1e-12)


def test_tally_additivity():
    pred_a, gt_a = _random_pair(1)
    pred_b, gt_b = _random_pair(2)
    combined = tally(np.vstack([pred_a, pred_b]), np.vstack([gt_a, gt_b]))
    summed = tally(pred_a, gt_a) + tally(pred_b, gt_b)
    assert np.array_equal(combined.tp, summed.tp)
    assert np.array_equal(combined.fp, summed.fp)
    assert np.array_equal(combined.fn, summed.fn)


def test_dice_dominates_iou():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        t = ConfusionTally(tp=rng.integers(0, 50, 7), fp=rng.integers(0, 50, 7),
                           fn=rng.integers(0, 50, 7))
        dice = dice_per_class(t)
        iou = iou_per_class(t)
        both = ~np.isnan(dice)
        assert (dice[both] >= iou[both] - 1e-12).all()
        boundary = both & np.isclose(dice, iou)
        assert np.isin(dice[boundary], [0.0, 1.0]).all()


def test_micro_f1_invariant_to_foreground_relabeling():
    pred, gt = _random_pair(9)
    perm = np.array([0, 3, 1, 2, 6, 4, 5], dtype=np.uint8)  # permutes foreground only
    assert micro_f1(tally(perm[pred], perm[gt])) == pytest.approx(
        micro_f1(tally(pred, gt)))


def test_metrics_stay_in_unit_interval():
    for seed in range(10):
        pred, gt = _random_pair(seed + 200)
        t = tally(pred, gt)
        for values in (dice_per_class(t), iou_per_class(t),
                       pixel_accuracy_per_class(t)):
            ok = ~np.isnan(values)
            assert (values[ok] >= 0.0).all() and (values[ok] <= 1.0).all()
        assert 0.0 <= micro_f1(t) <= 1.0
        assert 0.0 <= miou(t) <= 1.0


def test_miou_background_switch():
    pred = np.array([[0, 1], [2, 2]], dtype=np.uint8)
    gt = np.array([[0, 1], [2, 1]], dtype=np.uint8)
    t = tally(pred, gt)
    # foreground: IoU_1 = 1/2, IoU_2 = 1/2 -> 0.5; background IoU = 1
    assert miou(t) == pytest.approx(0.5)
    assert miou(t, include_background=True) == pytest.approx((1.0 + 0.5 + 0.5) / 3)
