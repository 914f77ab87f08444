"""Gradient-free class activation maps for semantic segmentation.

Both methods use a segmentation-specific scalar target: the mean softmax
probability of the target class over the pixels the unperturbed fused
prediction assigns to that class.  The region is frozen once per image so
perturbed forwards are scored against a fixed reference support.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engines import InferenceEngine
from .errors import ClassAbsentError, ContractError
from .fusion import FusionMode, fuse
from .tensors import (argmax_mask, bilinear_resize, minmax_normalize,
                      softmax_channels, validate_tensor)


@dataclass
class Cam:
    """A class activation map normalized to [0, 1] at image resolution."""
    map: np.ndarray
    class_id: int
    method: str

    def __post_init__(self):
        validate_tensor(self.map)
        if self.map.ndim != 2:
            raise ContractError("a CAM is a rank-2 map")
        if float(self.map.min()) < 0.0 or float(self.map.max()) > 1.0:
            raise ContractError("CAM values must lie in [0, 1]")


@dataclass
class TargetRegion:
    """Pixels the unperturbed fused prediction assigns to one class."""
    class_id: int
    mask: np.ndarray  # (H, W) bool

    @property
    def empty(self) -> bool:
        return not bool(self.mask.any())


def predicted_region(fused: np.ndarray, class_id: int) -> TargetRegion:
    if not 0 <= class_id < fused.shape[0]:
        raise ContractError(f"class {class_id} outside [0, {fused.shape[0]})")
    return TargetRegion(class_id=class_id, mask=argmax_mask(fused) == class_id)


def target_score(logits: np.ndarray, region: TargetRegion) -> float:
    """Mean softmax probability of the region's class over its pixels; 0 if empty."""
    if region.empty:
        return 0.0
    probs = softmax_channels(logits)
    return float(probs[region.class_id][region.mask].mean(dtype=np.float64))


def _base_pass(engine: InferenceEngine, image: np.ndarray, class_id: int,
               fusion: FusionMode | str, space: str):
    out = engine.forward(image)
    fused = fuse(out.main, out.aux, fusion, space)
    region = predicted_region(fused, class_id)
    if region.empty:
        raise ClassAbsentError(f"class {class_id} is not predicted on this image")
    return out, fused, region


def ablation_cam(engine: InferenceEngine, image: np.ndarray, class_id: int,
                 fusion: FusionMode | str = FusionMode.OUT,
                 space: str = "logit") -> Cam:
    """Weight each activation channel by the relative score drop when that
    channel is zeroed before the classification head; negative weights are
    clamped so the map stays a non-negative evidence heat-map.
    """
    out, fused, region = _base_pass(engine, image, class_id, fusion, space)
    base = target_score(fused, region)
    if base == 0.0:
        raise ClassAbsentError(f"class {class_id} has zero base score")
    h, w = image.shape[1], image.shape[2]
    up = bilinear_resize(out.activations, h, w)

    k_total = out.activations.shape[0]
    raw = np.zeros((h, w), dtype=np.float32)
    for k in range(k_total):
        ablated = engine.forward_ablated(image, {k})
        fused_k = fuse(ablated.main, ablated.aux, fusion, space)
        score_k = target_score(fused_k, region)
        weight = (base - score_k) / base
        if weight > 0.0:
            raw += np.float32(weight) * up[k]
    return Cam(map=minmax_normalize(np.maximum(raw, 0.0)), class_id=class_id,
               method="ablation")


def score_cam(engine: InferenceEngine, image: np.ndarray, class_id: int,
              fusion: FusionMode | str = FusionMode.OUT,
              space: str = "logit") -> Cam:
    """Weight each activation channel by the class score of the image masked
    with that channel's normalized map, softmaxed across channels.
    """
    out, fused, region = _base_pass(engine, image, class_id, fusion, space)
    if target_score(fused, region) == 0.0:
        raise ClassAbsentError(f"class {class_id} has zero base score")
    h, w = image.shape[1], image.shape[2]
    up = bilinear_resize(out.activations, h, w)

    k_total = out.activations.shape[0]
    scores = np.empty(k_total, dtype=np.float64)
    for k in range(k_total):
        mask = minmax_normalize(up[k])
        masked = (image * mask[None, :, :]).astype(np.float32)
        out_k = engine.forward(masked)
        fused_k = fuse(out_k.main, out_k.aux, fusion, space)
        scores[k] = target_score(fused_k, region)

    alphas = np.exp(scores - scores.max())
    alphas /= alphas.sum()
    raw = np.einsum("k,khw->hw", alphas, up.astype(np.float64))
    raw = np.maximum(raw, 0.0).astype(np.float32)
    return Cam(map=minmax_normalize(raw), class_id=class_id, method="score")
