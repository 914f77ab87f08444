"""Reference toy fully-convolutional architecture.

Mirrors the desk-scale model the evaluation pipeline ships with: valid
3x3 conv (3->8) + ReLU with a 1x1 auxiliary head, valid 3x3 conv (8->8) +
ReLU giving the activation maps, a 1x1 main head, main bilinearly resized
to the input size.  All weights derive from a splitmix64 stream over the
seed, mapped uniformly to [-0.5, 0.5), so any implementation regenerates
identical weights from the seed alone.
"""
from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
K_CHANNELS = 8


def _splitmix64(seed: int, count: int) -> np.ndarray:
    out = np.empty(count, dtype=np.uint64)
    state = seed & _MASK
    for i in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        out[i] = z ^ (z >> 31)
    return out


def _weights(seed: int, count: int) -> np.ndarray:
    raw = _splitmix64(seed, count)
    return ((raw >> np.uint64(11)) * np.float64(2.0 ** -53) - 0.5).astype(np.float32)


def _conv3x3_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    cin, h, width = x.shape
    cout = w.shape[0]
    out = np.zeros((cout, h - 2, width - 2), dtype=np.float32)
    for dy in range(3):
        for dx in range(3):
            patch = x[:, dy:dy + h - 2, dx:dx + width - 2]
            out += np.tensordot(w[:, :, dy, dx], patch, axes=(1, 0))
    return out


def _resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    _, h, w = x.shape
    if (out_h, out_w) == (h, w):
        return x.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, :]
    v00 = x[:, y0][:, :, x0]
    v01 = x[:, y0][:, :, x1]
    v10 = x[:, y1][:, :, x0]
    v11 = x[:, y1][:, :, x1]
    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    return (top + wy * (bot - top)).astype(np.float32)


class ToyModel:
    """Numpy inference for the reference toy architecture."""

    def __init__(self, seed: int, num_classes: int = 7):
        self.seed = int(seed)
        self.num_classes = int(num_classes)
        c = self.num_classes
        counts = [8 * 3 * 3 * 3, c * 8, K_CHANNELS * 8 * 3 * 3, c * K_CHANNELS]
        flat = _weights(self.seed, sum(counts))
        offsets = np.cumsum([0] + counts)
        self.w_stem = flat[offsets[0]:offsets[1]].reshape(8, 3, 3, 3)
        self.w_aux = flat[offsets[1]:offsets[2]].reshape(c, 8)
        self.w_mid = flat[offsets[2]:offsets[3]].reshape(K_CHANNELS, 8, 3, 3)
        self.w_main = flat[offsets[3]:offsets[4]].reshape(c, K_CHANNELS)

    @property
    def num_channels(self) -> int:
        return K_CHANNELS

    def forward(self, image: np.ndarray, ablate=frozenset()):
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError("expected a (3, H, W) image")
        h, w = image.shape[1], image.shape[2]
        stem = np.maximum(_conv3x3_valid(image.astype(np.float32), self.w_stem), 0.0)
        aux = np.tensordot(self.w_aux, stem, axes=(1, 0)).astype(np.float32)
        acts = np.maximum(_conv3x3_valid(stem, self.w_mid), 0.0)
        head_in = acts
        if ablate:
            head_in = acts.copy()
            head_in[sorted(ablate)] = 0.0
        main = np.tensordot(self.w_main, head_in, axes=(1, 0)).astype(np.float32)
        return _resize_bilinear(main, h, w), aux, acts
