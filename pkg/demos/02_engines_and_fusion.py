"""
Inference engines and inference-only feature fusion
===================================================

The pipeline is written against a tiny engine contract: forward an RGB
image, get main logits, auxiliary logits, and the final backbone
activations.  A deterministic toy FCN (weights derived from a splitmix64
seed) makes every downstream quantity reproducible without trained
checkpoints; real models attach through the framed stdio protocol.

Fusion combines the auxiliary and main heads at inference time only:
OUT (baseline), AUX, ADD (class-paired sum), MULTI (class-paired product).
"""
import numpy as np

from sprayeval import CachedEngine, ToyFcnEngine, argmax_mask, fuse

rng = np.random.default_rng(1)
image = rng.uniform(0.0, 1.0, size=(3, 48, 48)).astype(np.float32)

engine = ToyFcnEngine(seed=42)
d = engine.descriptor()
print(f"engine {d.name}: {d.num_classes} classes, {d.num_channels} activation channels")

out = engine.forward(image)
print(f"main {out.main.shape}, aux {out.aux.shape}, activations {out.activations.shape}")

# ablating every activation channel silences the (linear, bias-free) main head
silenced = engine.forward_ablated(image, set(range(d.num_channels)))
print("full ablation zeroes the main logits:", not silenced.main.any())

# fusion modes disagree about the prediction wherever aux adds information
for mode in ("out", "aux", "add", "multi"):
    fused = fuse(out.main, out.aux, mode)
    mask = argmax_mask(fused)
    counts = {int(c): int(n) for c, n in
              zip(*np.unique(mask, return_counts=True))}
    print(f"fusion={mode:5s} class histogram: {counts}")

# identities: a unit aux under MULTI and a zero aux under ADD are no-ops
unit = np.ones_like(out.aux)
zero = np.zeros_like(out.aux)
assert np.array_equal(fuse(out.main, unit, "multi"), out.main)
assert np.array_equal(fuse(out.main, zero, "add"), out.main)
print("fusion identities hold exactly")

# CAM evaluation replays many perturbed forwards; the memoizing wrapper
# deduplicates them by content hash
cached = CachedEngine(ToyFcnEngine(seed=42), capacity=64)
for _ in range(5):
    cached.forward(image)
print(f"cache after 5 identical forwards: hits={cached.hits} misses={cached.misses}")
