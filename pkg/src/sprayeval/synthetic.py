"""Synthetic scenes, datasets, and stub engines for desk-scale evaluation.

Real trained checkpoints are not needed anywhere in the test suite: the
generators here plant known structure (actuation blobs with exact keypoint
counts, box-driven model scores) so every downstream quantity has a known
expected value.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .engines import EngineDescriptor, ModelOutput, _check_ablation
from .errors import ContractError
from .tensors import DEFAULT_CLASSES, validate_tensor
from .wsde import KeyPointSet


def plus_blob(center: tuple[int, int]) -> list[tuple[int, int]]:
    """Five-pixel plus-shaped blob around a center pixel."""
    r, c = center
    return [(r, c), (r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)]


def ring_layout(n: int, rng: np.random.Generator, height: int = 128,
                width: int = 128, radius: int = 42) -> list[tuple[int, int]]:
    """n well-separated blob centers: one at the middle plus n-1 on a ring.

    Pairwise distances stay above ~30 px for n up to 8 at the default size.
    """
    ctr = (height // 2, width // 2)
    if n == 1:
        jr = int(rng.integers(-8, 9))
        jc = int(rng.integers(-8, 9))
        return [(ctr[0] + jr, ctr[1] + jc)]
    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    centers = []
    m = n - 1
    for i in range(m):
        theta = theta0 + 2.0 * np.pi * i / m + rng.uniform(-0.06, 0.06)
        centers.append((ctr[0] + int(round(radius * np.sin(theta))),
                        ctr[1] + int(round(radius * np.cos(theta)))))
    centers.append(ctr)
    return centers


def plant_actuation_scene(n: int, seed: int, height: int = 128, width: int = 128,
                          class_id: int = 4):
    """A CAM / prediction-mask pair with exactly ``n`` planted actuations.

    Returns (cam map, prediction mask, ground-truth KeyPointSet).  Blob
    pixels carry the CAM maximum and the target class; the background CAM is
    low-amplitude noise so the top-10% threshold keeps exactly the blobs.
    """
    if not 1 <= n:
        raise ContractError("need at least one actuation blob")
    rng = np.random.default_rng([seed, n])
    cam = rng.uniform(0.0, 0.4, size=(height, width)).astype(np.float32)
    pred = np.zeros((height, width), dtype=np.uint8)
    centers = ring_layout(n, rng, height, width)
    for center in centers:
        for r, c in plus_blob(center):
            cam[r, c] = 1.0
            pred[r, c] = class_id
    gt = KeyPointSet(class_id=class_id, points=[(int(r), int(c)) for r, c in centers])
    return cam, pred, gt


class PlantedBoxEngine:
    """Stub engine whose class score is driven by mean brightness inside a
    fixed box, making the ground-truth saliency (the box indicator) known.

    The target class logit is ``gain * mean(image inside box)`` everywhere,
    all other logits are zero, so with a bright box the class is predicted
    on every pixel and its confidence rises monotonically with box content.
    """

    def __init__(self, box: tuple[int, int, int, int], class_id: int = 1,
                 num_classes: int = 7, gain: float = 8.0):
        r0, c0, r1, c1 = box
        if not (r0 < r1 and c0 < c1):
            raise ContractError("box must have positive extent")
        self.box = (r0, c0, r1, c1)
        self.class_id = int(class_id)
        self.num_classes = int(num_classes)
        self.gain = float(gain)

    def descriptor(self) -> EngineDescriptor:
        return EngineDescriptor(self.num_classes, 1, "planted-box")

    def saliency(self, height: int, width: int) -> np.ndarray:
        r0, c0, r1, c1 = self.box
        out = np.zeros((height, width), dtype=np.float32)
        out[r0:r1, c0:c1] = 1.0
        return out

    def forward(self, image: np.ndarray) -> ModelOutput:
        validate_tensor(image)
        if image.ndim != 3:
            raise ContractError("expected a (C, H, W) image")
        r0, c0, r1, c1 = self.box
        h, w = image.shape[1], image.shape[2]
        score = float(image[:, r0:r1, c0:c1].mean(dtype=np.float64))
        main = np.zeros((self.num_classes, h, w), dtype=np.float32)
        main[self.class_id] = self.gain * score
        acts = self.saliency(h, w)[None, :, :]
        return ModelOutput(main=main, aux=main.copy(), activations=acts)

    def forward_ablated(self, image: np.ndarray, channels) -> ModelOutput:
        ids = _check_ablation(channels, 1)
        out = self.forward(image)
        if ids:
            out.main[:] = 0.0
            out.aux[:] = 0.0
            out.activations[:] = 0.0
        return out


class ConstantEngine:
    """Engine that ignores its input entirely; curves over it are flat."""

    def __init__(self, main: np.ndarray, aux: np.ndarray, activations: np.ndarray):
        self._out = ModelOutput(main=main, aux=aux, activations=activations)

    def descriptor(self) -> EngineDescriptor:
        return EngineDescriptor(self._out.main.shape[0],
                                self._out.activations.shape[0], "constant")

    def forward(self, image: np.ndarray) -> ModelOutput:
        return ModelOutput(main=self._out.main.copy(), aux=self._out.aux.copy(),
                           activations=self._out.activations.copy())

    def forward_ablated(self, image: np.ndarray, channels) -> ModelOutput:
        _check_ablation(channels, self._out.activations.shape[0])
        return self.forward(image)


# ---------------------------------------------------------------------------
# Synthetic dataset generation
# ---------------------------------------------------------------------------

_CLASS_COLORS = {
    1: (0.20, 0.55, 0.15),   # lettuce
    2: (0.35, 0.65, 0.25),   # chickweed
    3: (0.45, 0.60, 0.20),   # meadowgrass
    4: (0.25, 0.60, 0.35),   # sprayed lettuce
    5: (0.40, 0.70, 0.45),   # sprayed chickweed
    6: (0.50, 0.65, 0.40),   # sprayed meadowgrass
}
_CLASS_RADII = {1: 11, 2: 7, 3: 5, 4: 11, 5: 7, 6: 5}


def _paint_disk(image, mask, center, radius, class_id, rng):
    h, w = mask.shape
    r0, c0 = center
    color = np.array(_CLASS_COLORS[class_id], dtype=np.float32)
    for r in range(max(0, r0 - radius), min(h, r0 + radius + 1)):
        for c in range(max(0, c0 - radius), min(w, c0 + radius + 1)):
            if (r - r0) ** 2 + (c - c0) ** 2 <= radius ** 2:
                mask[r, c] = class_id
                image[:, r, c] = color * (0.85 + 0.3 * rng.random())
    if class_id >= 4:
        # droplet speckles on sprayed targets
        for _ in range(8):
            dr = int(rng.integers(-radius, radius + 1))
            dc = int(rng.integers(-radius, radius + 1))
            r, c = r0 + dr, c0 + dc
            if 0 <= r < h and 0 <= c < w and mask[r, c] == class_id:
                image[:, r, c] = 0.92


def generate_scene(seed: int, index: int, height: int = 96, width: int = 96):
    """One synthetic tray: RGB image, label mask, and GT keypoints.

    Sprayed-class blobs carry one keypoint each at the blob center; blob
    slots are laid out on a grid so keypoints keep a known minimum spacing.
    """
    rng = np.random.default_rng([seed, index])
    image = rng.uniform(0.28, 0.38, size=(3, height, width)).astype(np.float32)
    image[0] += 0.08  # soil tint
    mask = np.zeros((height, width), dtype=np.uint8)

    rows = max(1, height // 32)
    cols = max(1, width // 32)
    slots = [(16 + 32 * r, 16 + 32 * c) for r in range(rows) for c in range(cols)]
    rng.shuffle(slots)
    keypoints: dict[int, list[tuple[int, int]]] = {}
    most = min(len(slots), 6)
    n_blobs = int(rng.integers(min(3, most), most + 1))
    for slot in slots[:n_blobs]:
        class_id = int(rng.integers(1, 7))
        jitter = rng.integers(-3, 4, size=2)
        center = (int(slot[0] + jitter[0]), int(slot[1] + jitter[1]))
        _paint_disk(image, mask, center, _CLASS_RADII[class_id], class_id, rng)
        if class_id >= 4:
            keypoints.setdefault(class_id, []).append(center)
    np.clip(image, 0.0, 1.0, out=image)
    return image, mask, keypoints


def synth_dataset(root, num_images: int = 6, seed: int = 0, height: int = 96,
                  width: int = 96, train_fraction: float = 0.5) -> dict:
    """Write a full synthetic dataset (images/, masks/, keypoints/, split.csv)
    under ``root`` and return its manifest statistics."""
    from PIL import Image

    root = Path(root)
    for sub in ("images", "masks", "keypoints"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    num_train = min(num_images - 1, max(1, int(round(num_images * train_fraction)))) \
        if num_images > 1 else 0
    stats = {"images": num_images, "keypoints": 0, "split": {"train": 0, "test": 0}}
    split_rows = []
    for i in range(num_images):
        image, mask, keypoints = generate_scene(seed, i, height, width)
        image_id = f"img{i:03d}"
        rgb = (image.transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
        Image.fromarray(rgb, mode="RGB").save(root / "images" / f"{image_id}.png")
        Image.fromarray(mask, mode="L").save(root / "masks" / f"{image_id}.png")
        with open(root / "keypoints" / f"{image_id}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "class_id", "row", "col"])
            for class_id in sorted(keypoints):
                for r, c in keypoints[class_id]:
                    writer.writerow([image_id, class_id, r, c])
                    stats["keypoints"] += 1
        split = "train" if i < num_train else "test"
        stats["split"][split] += 1
        split_rows.append((image_id, split))
    with open(root / "split.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "split"])
        writer.writerows(split_rows)
    return stats
