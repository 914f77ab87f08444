"""Inference-only fusion of main and auxiliary class-score maps."""
from __future__ import annotations

from enum import Enum

import numpy as np

from .errors import ContractError
from .tensors import bilinear_resize, softmax_channels, validate_tensor


class FusionMode(str, Enum):
    OUT = "out"      # main output only (the baseline)
    AUX = "aux"      # auxiliary output only
    ADD = "add"      # element-wise sum of class-paired maps
    MULTI = "multi"  # element-wise product of class-paired maps


def fuse(main: np.ndarray, aux: np.ndarray, mode: FusionMode | str,
         space: str = "logit") -> np.ndarray:
    """Combine main (C, H, W) and auxiliary (C, Ha, Wa) score maps.

    The auxiliary map is first bilinearly resized to the main resolution.
    ``space`` selects whether ADD/MULTI combine raw logits (default) or
    per-pixel softmax probabilities; OUT and AUX are unaffected by it.
    """
    mode = FusionMode(mode)
    if space not in ("logit", "prob"):
        raise ContractError(f"unknown fusion space {space!r}")
    validate_tensor(main)
    validate_tensor(aux)
    if main.ndim != 3 or aux.ndim != 3:
        raise ContractError("fusion expects rank-3 score maps")
    if main.shape[0] != aux.shape[0]:
        raise ContractError(
            f"channel mismatch: main has {main.shape[0]}, aux has {aux.shape[0]}")

    if mode is FusionMode.OUT:
        return main.copy()
    aux_r = bilinear_resize(aux, main.shape[1], main.shape[2])
    if mode is FusionMode.AUX:
        return aux_r
    lhs, rhs = main, aux_r
    if space == "prob":
        lhs = softmax_channels(main)
        rhs = softmax_channels(aux_r)
    if mode is FusionMode.ADD:
        out = lhs + rhs
    else:
        out = lhs * rhs
    if not np.isfinite(out).all():
        raise ContractError("fusion produced non-finite values")
    return out.astype(np.float32)
