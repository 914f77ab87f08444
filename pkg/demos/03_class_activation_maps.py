"""
Gradient-free class activation maps
===================================

Two CAM flavors over the engine's backbone activations, both driven by a
segmentation-specific scalar target (mean class probability over the
pixels the unperturbed prediction assigns to the class):

* AblationCAM  -- weight = relative score drop when a channel is zeroed
* ScoreCAM     -- weight = softmaxed score of the image masked by each
                  channel's normalized map
"""
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from sprayeval import ToyFcnEngine, ablation_cam, argmax_mask, fuse, score_cam

rng = np.random.default_rng(7)
image = rng.uniform(0.0, 1.0, size=(3, 40, 40)).astype(np.float32)
engine = ToyFcnEngine(seed=11)

# pick a class the fused prediction actually contains
out = engine.forward(image)
mask = argmax_mask(fuse(out.main, out.aux, "out"))
counts = np.bincount(mask.ravel(), minlength=7)
counts[0] = 0
class_id = int(counts.argmax())
print(f"explaining class {class_id} ({int(counts[class_id])} predicted pixels)")

out_dir = Path(tempfile.mkdtemp(prefix="sprayeval_demo_"))
for maker in (ablation_cam, score_cam):
    cam = maker(engine, image, class_id)
    hot = (cam.map >= 0.5).mean()
    print(f"{cam.method:8s} CAM: range [{cam.map.min():.2f}, {cam.map.max():.2f}], "
          f"{hot:.1%} of pixels above 0.5")
    png = out_dir / f"{cam.method}_cam.png"
    Image.fromarray((cam.map * 255).round().astype(np.uint8), mode="L").save(png)
    print(f"  grayscale export -> {png}")

# a head wired to one activation channel makes AblationCAM fully legible:
# the map is exactly that channel's normalized, upsampled activation
wired = ToyFcnEngine(seed=11)
wired.w_main = np.zeros_like(wired.w_main)
wired.w_main[2, 3] = 1.0
cam = ablation_cam(wired, image, 2)
from sprayeval import bilinear_resize, minmax_normalize

expected = minmax_normalize(bilinear_resize(wired.forward(image).activations[3], 40, 40))
print("single-channel head recovered exactly:",
      float(np.abs(cam.map - expected).max()) < 1e-5)
