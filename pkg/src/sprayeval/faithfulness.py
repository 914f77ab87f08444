"""Deletion and Insertion faithfulness curves under most-relevant-first
pixel ordering with zero imputation, and their trapezoidal AUC summary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cams import Cam, predicted_region, target_score
from .engines import InferenceEngine
from .errors import ClassAbsentError, ContractError
from .fusion import FusionMode, fuse

CURVE_STEPS = 100  # 1% increments -> 101 samples including both endpoints


@dataclass
class FaithfulnessCurve:
    fractions: np.ndarray    # (n,) strictly increasing, 0.0 .. 1.0
    confidences: np.ndarray  # (n,) model confidence at each fraction
    kind: str                # "deletion" | "insertion"

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        self.confidences = np.asarray(self.confidences, dtype=np.float64)
        if self.fractions.shape != self.confidences.shape or self.fractions.ndim != 1:
            raise ContractError("curve axes must be equal-length vectors")
        if len(self.fractions) < 2 or not (np.diff(self.fractions) > 0).all():
            raise ContractError("fractions must be strictly increasing")


def morf_order(cam: Cam | np.ndarray) -> np.ndarray:
    """Flat pixel indices sorted by descending CAM value; ties resolve in
    row-major order so the permutation is deterministic."""
    values = cam.map if isinstance(cam, Cam) else np.asarray(cam)
    if values.ndim != 2:
        raise ContractError("saliency map must be rank 2")
    return np.argsort(-values.ravel(), kind="stable")


def _curve(engine: InferenceEngine, image: np.ndarray, cam: Cam | np.ndarray,
           class_id: int, fusion: FusionMode | str, space: str,
           kind: str) -> FaithfulnessCurve:
    out0 = engine.forward(image)
    fused0 = fuse(out0.main, out0.aux, fusion, space)
    region = predicted_region(fused0, class_id)
    if region.empty:
        raise ClassAbsentError(f"class {class_id} is not predicted on this image")
    base_score = target_score(fused0, region)

    order = morf_order(cam)
    c, h, w = image.shape
    total = h * w
    if len(order) != total:
        raise ContractError("saliency map and image disagree on pixel count")

    flat_image = image.reshape(c, total)
    work = flat_image.copy() if kind == "deletion" else np.zeros_like(flat_image)

    fractions = np.arange(CURVE_STEPS + 1, dtype=np.float64) / CURVE_STEPS
    confidences = np.empty(CURVE_STEPS + 1, dtype=np.float64)
    prev = 0
    for step in range(CURVE_STEPS + 1):
        count = (step * total) // CURVE_STEPS
        touched = order[prev:count]
        if kind == "deletion":
            work[:, touched] = 0.0
        else:
            work[:, touched] = flat_image[:, touched]
        prev = count
        if (kind == "deletion" and step == 0) or (kind == "insertion" and step == CURVE_STEPS):
            # untouched image: reuse the unperturbed forward so the endpoint
            # identity deletion[0] == insertion[100] holds exactly
            confidences[step] = base_score
            continue
        out = engine.forward(work.reshape(c, h, w))
        fused = fuse(out.main, out.aux, fusion, space)
        confidences[step] = target_score(fused, region)
    return FaithfulnessCurve(fractions=fractions, confidences=confidences, kind=kind)


def deletion_curve(engine: InferenceEngine, image: np.ndarray, cam: Cam | np.ndarray,
                   class_id: int, fusion: FusionMode | str = FusionMode.OUT,
                   space: str = "logit") -> FaithfulnessCurve:
    """Confidence as the most-relevant pixels are progressively blacked out."""
    return _curve(engine, image, cam, class_id, fusion, space, "deletion")


def insertion_curve(engine: InferenceEngine, image: np.ndarray, cam: Cam | np.ndarray,
                    class_id: int, fusion: FusionMode | str = FusionMode.OUT,
                    space: str = "logit") -> FaithfulnessCurve:
    """Confidence as the most-relevant pixels are restored to a black canvas."""
    return _curve(engine, image, cam, class_id, fusion, space, "insertion")


def auc(curve: FaithfulnessCurve) -> float:
    """Composite trapezoidal area h/2 * [y0 + 2(y1 + ... + y_{n-1}) + yn]
    over the normalized fraction axis (h = 0.01 for the standard curve)."""
    y = curve.confidences
    n = len(y) - 1
    h = (curve.fractions[-1] - curve.fractions[0]) / n
    return float(h / 2.0 * (y[0] + 2.0 * y[1:n].sum() + y[n]))


def class_averaged_scores(per_class) -> tuple[float, float, bool]:
    """Mean (deletion, insertion) AUC over per-class pairs, plus whether the
    result counts as interpretable (mean deletion strictly below insertion).
    Classes absent from an image are expected to be skipped upstream."""
    pairs = list(per_class)
    if not pairs:
        raise ValueError("no per-class scores to average")
    deletions = np.array([p[0] for p in pairs], dtype=np.float64)
    insertions = np.array([p[1] for p in pairs], dtype=np.float64)
    mean_del = float(deletions.mean())
    mean_ins = float(insertions.mean())
    return mean_del, mean_ins, mean_del < mean_ins
