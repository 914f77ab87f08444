"""
Tensors, the TNSR container, and the numeric kernels
====================================================

Everything in this package moves through plain float32 numpy arrays:
rank-3 (channels, height, width) for logits/activations, rank-2 for CAMs
and masks.  This script walks the portable binary container and the small
kernel set the rest of the pipeline is built from.
"""
import tempfile
from pathlib import Path

import numpy as np

from sprayeval import (argmax_mask, bilinear_resize, minmax_normalize,
                       percentile, read_tensor, softmax_channels, write_tensor)

out_dir = Path(tempfile.mkdtemp(prefix="sprayeval_demo_"))

# --- the TNSR container: fixed little-endian layout, bit-exact round trips
rng = np.random.default_rng(0)
logits = rng.normal(size=(7, 32, 32)).astype(np.float32)
path = out_dir / "logits.tnsr"
write_tensor(logits, path)
back = read_tensor(path)
print(f"round trip bit-exact: {np.array_equal(back, logits)}  ({path})")

# --- bilinear resize with half-pixel centers (align-corners=false)
small = np.array([[[0.0, 1.0], [2.0, 3.0]]], dtype=np.float32)
print("2x2 grid resized to 4x4:")
print(bilinear_resize(small, 4, 4)[0])

# constant maps stay exactly constant: every output is a convex combination
flat = np.full((1, 5, 5), 3.5, dtype=np.float32)
assert np.array_equal(bilinear_resize(flat, 17, 9),
                      np.full((1, 17, 9), 3.5, dtype=np.float32))

# --- per-pixel channel softmax, numerically safe for extreme logits
extreme = np.zeros((2, 1, 1), dtype=np.float32)
extreme[0] = 1000.0
print("softmax of (1000, 0) logits:", softmax_channels(extreme)[:, 0, 0])

# --- argmax with background-first tie breaking
prediction = argmax_mask(logits)
print("predicted classes present:", sorted(np.unique(prediction).tolist()))

# --- the percentile that realizes a "top 10% of the CAM" threshold
cam = rng.uniform(size=(64, 64)).astype(np.float32)
threshold = percentile(cam, 90.0)
kept = (cam >= threshold).mean()
print(f"90th percentile threshold {threshold:.3f} keeps {kept:.1%} of pixels")

# --- min-max normalization maps any heat map into [0, 1]
normalized = minmax_normalize(cam)
print(f"normalized range: [{normalized.min():.1f}, {normalized.max():.1f}]")
