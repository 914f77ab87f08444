"""Class-wise Dice, mIoU, per-class pixel accuracy, and micro F1 between
predicted and ground-truth label masks, accumulated per image or over a
whole test set.

Background (class 0) is excluded from averages and micro aggregation by
default; classes absent from both masks report NaN and drop out of
averages instead of scoring zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError


@dataclass
class ConfusionTally:
    """Per-class TP/FP/FN pixel counts; tallies add like values."""
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __post_init__(self):
        self.tp = np.asarray(self.tp, dtype=np.int64)
        self.fp = np.asarray(self.fp, dtype=np.int64)
        self.fn = np.asarray(self.fn, dtype=np.int64)
        if not (self.tp.shape == self.fp.shape == self.fn.shape) or self.tp.ndim != 1:
            raise ContractError("tally arrays must share one per-class axis")
        if (self.tp < 0).any() or (self.fp < 0).any() or (self.fn < 0).any():
            raise ContractError("tally counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    @property
    def correct(self) -> np.ndarray:
        return self.tp

    @property
    def total_gt(self) -> np.ndarray:
        return self.tp + self.fn

    def __add__(self, other: "ConfusionTally") -> "ConfusionTally":
        if other.num_classes != self.num_classes:
            raise ContractError("cannot add tallies over different class counts")
        return ConfusionTally(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionTally":
        z = np.zeros(num_classes, dtype=np.int64)
        return cls(z.copy(), z.copy(), z.copy())


def tally(pred: np.ndarray, gt: np.ndarray, num_classes: int = 7) -> ConfusionTally:
    """Count TP/FP/FN pixels per class between two equal-size masks."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ContractError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    p = pred.astype(np.int64).ravel()
    g = gt.astype(np.int64).ravel()
    if p.size and (int(p.max()) >= num_classes or int(g.max()) >= num_classes):
        raise DataError("mask holds a label outside the class table")
    matrix = np.bincount(g * num_classes + p,
                         minlength=num_classes * num_classes).reshape(num_classes,
                                                                      num_classes)
    tp = np.diag(matrix).copy()
    fp = matrix.sum(axis=0) - tp
    fn = matrix.sum(axis=1) - tp
    return ConfusionTally(tp, fp, fn)


def dice_per_class(t: ConfusionTally) -> np.ndarray:
    """2*TP / (2*TP + FP + FN); NaN for classes absent from both masks."""
    denom = 2 * t.tp + t.fp + t.fn
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, 2.0 * t.tp / denom, np.nan)
    return out


def iou_per_class(t: ConfusionTally) -> np.ndarray:
    """TP / (TP + FP + FN); NaN for classes absent from both masks."""
    denom = t.tp + t.fp + t.fn
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, t.tp / denom, np.nan)
    return out


def miou(t: ConfusionTally, include_background: bool = False) -> float:
    """Mean IoU over the classes present in ground truth or prediction."""
    iou = iou_per_class(t)
    if not include_background:
        iou = iou[1:]
    if np.isnan(iou).all():
        return float("nan")
    return float(np.nanmean(iou))


def pixel_accuracy_per_class(t: ConfusionTally) -> np.ndarray:
    """Recall-form accuracy TP / GT pixels; NaN when the class has no GT."""
    gt = t.total_gt
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(gt > 0, t.tp / gt, np.nan)
    return out


def micro_f1(t: ConfusionTally, include_background: bool = False) -> float:
    """F1 from TP/FP/FN pooled across classes (background excluded by default)."""
    sel = slice(None) if include_background else slice(1, None)
    tp = int(t.tp[sel].sum())
    fp = int(t.fp[sel].sum())
    fn = int(t.fn[sel].sum())
    if tp + fp == 0 or tp + fn == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    if precision + recall == 0.0:
        return 0.0
    return float(2.0 * precision * recall / (precision + recall))
