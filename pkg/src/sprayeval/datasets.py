"""Dataset layout, ingestion, and per-image I/O.

Expected layout under a dataset root (directory names remappable through an
optional ``dataset.map`` file of ``key = value`` lines):

    images/<id>.png       RGB photographs
    masks/<id>.png|.lmsk  label masks (grayscale class ids, or LMSK binary)
    keypoints/<id>.csv    GT actuation keypoints: image_id,class_id,row,col
    split.csv             image_id,split  with split in {train, test}
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensors import DEFAULT_CLASSES, ClassTable, read_mask
from .wsde import SprayerSpec, connected_components, coverage, hit_miss_rate

_DEFAULT_MAP = {"images": "images", "masks": "masks",
                "keypoints": "keypoints", "split": "split.csv"}


@dataclass
class DatasetItem:
    image_id: str
    image_path: Path
    mask_path: Path
    keypoints_path: Path | None
    split: str


@dataclass
class DatasetIndex:
    root: Path
    items: list[DatasetItem]

    def split_items(self, split: str) -> list[DatasetItem]:
        return [it for it in self.items if it.split == split]

    @property
    def test_items(self) -> list[DatasetItem]:
        return self.split_items("test")


def load_dataset_map(root: Path) -> dict[str, str]:
    mapping = dict(_DEFAULT_MAP)
    map_path = root / "dataset.map"
    if map_path.exists():
        for line_no, line in enumerate(map_path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"dataset.map line {line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in mapping:
                raise DataError(f"dataset.map line {line_no}: unknown key {key!r}")
            mapping[key] = value.strip()
    return mapping


def _find_mask(masks_dir: Path, image_id: str) -> Path | None:
    for ext in (".png", ".lmsk"):
        candidate = masks_dir / f"{image_id}{ext}"
        if candidate.exists():
            return candidate
    return None


def ingest(root, class_table: ClassTable = DEFAULT_CLASSES) -> DatasetIndex:
    """Validate the dataset layout and return an index of its images.

    Every image needs a split entry and a mask; test images additionally
    want keypoints for the deposition task (absence is tolerated but the
    item records no keypoint path).  Masks holding unknown class ids raise
    a DataError naming the offending file.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    mapping = load_dataset_map(root)
    images_dir = root / mapping["images"]
    masks_dir = root / mapping["masks"]
    keypoints_dir = root / mapping["keypoints"]
    split_path = root / mapping["split"]
    if not split_path.exists():
        raise DataError(f"missing split manifest {split_path}")

    splits: dict[str, str] = {}
    with open(split_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["image_id", "split"]:
            raise DataError(f"{split_path}: expected header image_id,split")
        for row in reader:
            if row["split"] not in ("train", "test"):
                raise DataError(f"{split_path}: unknown split {row['split']!r} "
                                f"for {row['image_id']}")
            splits[row["image_id"]] = row["split"]
    if not splits:
        raise DataError(f"{split_path} lists no images")

    items = []
    missing = []
    for image_id in sorted(splits):
        image_path = images_dir / f"{image_id}.png"
        mask_path = _find_mask(masks_dir, image_id)
        if not image_path.exists() or mask_path is None:
            missing.append(image_id)
            continue
        kp = keypoints_dir / f"{image_id}.csv"
        items.append(DatasetItem(image_id=image_id, image_path=image_path,
                                 mask_path=mask_path,
                                 keypoints_path=kp if kp.exists() else None,
                                 split=splits[image_id]))
    if missing:
        raise DataError("missing image or mask for: " + ", ".join(missing))

    for item in items:
        mask = load_mask(item.mask_path, class_table.num_classes)
        del mask
    return DatasetIndex(root=root, items=items)


def load_image(path) -> np.ndarray:
    """Decode an RGB image to a (3, H, W) float32 tensor in [0, 1]."""
    from PIL import Image

    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def load_mask(path, num_classes: int) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".lmsk":
        mask = read_mask(path)
    else:
        from PIL import Image

        with Image.open(path) as img:
            mask = np.asarray(img.convert("L"), dtype=np.uint8)
    if mask.size and int(mask.max()) >= num_classes:
        raise DataError(f"{path}: label {int(mask.max())} outside "
                        f"[0, {num_classes})")
    return mask


def read_keypoints_csv(path) -> dict[int, list[tuple[int, int]]]:
    """Keypoints grouped by class id from an image_id,class_id,row,col CSV."""
    out: dict[int, list[tuple[int, int]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["image_id", "class_id", "row", "col"]
        if reader.fieldnames != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            try:
                out.setdefault(int(row["class_id"]), []).append(
                    (int(row["row"]), int(row["col"])))
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: malformed keypoint row {row}") from exc
    return out


def write_keypoints_csv(path, rows) -> None:
    """Write (image_id, class_id, row, col) tuples with the standard header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "class_id", "row", "col"])
        writer.writerows(rows)


def dataset_statistics(index: DatasetIndex, spec: SprayerSpec | None = None,
                       class_table: ClassTable = DEFAULT_CLASSES) -> dict:
    """Per-class instance counts, coverage, and sprayed-vs-unsprayed hit
    rates across the whole dataset (ground truth only)."""
    spec = spec or SprayerSpec()
    num_classes = class_table.num_classes
    instances = {i: 0 for i in range(num_classes)}
    pixels = {i: 0 for i in range(num_classes)}
    for item in index.items:
        mask = load_mask(item.mask_path, num_classes)
        instances[0] += 1  # one background region per image
        for class_id in class_table.foreground_ids:
            binary = mask == class_id
            if binary.any():
                _, count = connected_components(binary, connectivity=8)
                instances[class_id] += count
                pixels[class_id] += int(binary.sum())

    coverage_rows = []
    for sprayed_id, base_id in sorted(class_table.sprayed_pair.items()):
        total_cm2 = (pixels[base_id] + pixels[sprayed_id]) * spec.cm2_per_pixel
        n_instances = instances[base_id] + instances[sprayed_id]
        rates = hit_miss_rate(instances[sprayed_id], instances[base_id])
        coverage_rows.append({
            "class": class_table.name_of(base_id),
            "coverage_cm2": total_cm2,
            "average_coverage_cm2": total_cm2 / n_instances if n_instances else 0.0,
            "hit_pct": rates[0] if rates else None,
            "miss_pct": rates[1] if rates else None,
        })
    return {
        "num_images": len(index.items),
        "num_train": len(index.split_items("train")),
        "num_test": len(index.split_items("test")),
        "total_annotations": int(sum(instances.values())),
        "instances": {class_table.name_of(i): instances[i] for i in range(num_classes)},
        "coverage_rate": coverage_rows,
    }
