"""End-to-end orchestration: forward -> fuse -> predict -> metrics -> CAM ->
faithfulness -> deposition, with persisted intermediates and a replay check
that recomputes every reported number from those intermediates.

Orchestration adds no numerics of its own; every value in the bundle is
recomputable by calling the owning module on the saved artifacts.
"""
from __future__ import annotations

import csv
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cams import ablation_cam, score_cam
from .datasets import (DatasetIndex, dataset_statistics, ingest, load_image,
                       load_mask, read_keypoints_csv, write_keypoints_csv)
from .engines import CachedEngine, ExternalEngine, ToyFcnEngine
from .errors import ClassAbsentError, ConfigError, DataError, SprayEvalError
from .faithfulness import (FaithfulnessCurve, auc, class_averaged_scores,
                           deletion_curve, insertion_curve)
from .fusion import FusionMode, fuse
from .segmetrics import (ConfusionTally, dice_per_class, micro_f1, miou,
                         pixel_accuracy_per_class, tally)
from .tensors import (DEFAULT_CLASSES, ClassTable, argmax_mask, read_tensor,
                      write_mask, write_tensor)
from .wsde import (KeyPointSet, SprayerSpec, cluster_affinity, cluster_centres,
                   cluster_threshold, coverage, deposition_report,
                   extract_islands, island_points, pointing_game)

SCHEMA_VERSION = 1
ALL_STAGES = frozenset({"seg", "cam", "wsde"})


@dataclass
class RunConfig:
    dataset_root: str
    out_dir: str
    engine: str = "toy:0"            # "toy:<seed>" or "exec:<command line>"
    fusion: str = "out"
    fusion_space: str = "logit"
    cam_method: str = "ablation"     # ablation | score
    cluster_method: str = "centres"  # centres | affinity | threshold
    top_mode: str = "percentile"     # percentile | value
    min_island_px: int = 4
    include_background: bool = False
    jobs: int = 1
    cache_capacity: int = 512
    sprayer: SprayerSpec = field(default_factory=SprayerSpec)

    def __post_init__(self):
        if self.fusion not in ("out", "aux", "add", "multi"):
            raise ConfigError(f"unknown fusion mode {self.fusion!r}")
        if self.fusion_space not in ("logit", "prob"):
            raise ConfigError(f"unknown fusion space {self.fusion_space!r}")
        if self.cam_method not in ("ablation", "score"):
            raise ConfigError(f"unknown CAM method {self.cam_method!r}")
        if self.cluster_method not in ("centres", "affinity", "threshold"):
            raise ConfigError(f"unknown clustering method {self.cluster_method!r}")
        if self.top_mode not in ("percentile", "value"):
            raise ConfigError(f"unknown top mode {self.top_mode!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if not str(self.engine).startswith(("toy:", "exec:")):
            raise ConfigError(f"engine must be toy:<seed> or exec:<cmd>, got {self.engine!r}")

    def to_json(self) -> dict:
        return {
            "dataset_root": str(self.dataset_root),
            "engine": self.engine,
            "fusion": self.fusion,
            "fusion_space": self.fusion_space,
            "cam_method": self.cam_method,
            "cluster_method": self.cluster_method,
            "top_mode": self.top_mode,
            "min_island_px": self.min_island_px,
            "include_background": self.include_background,
            "sprayer": {
                "unit_deposit_ul": self.sprayer.unit_deposit_ul,
                "deposit_std_ul": self.sprayer.deposit_std_ul,
                "min_point_distance_px": self.sprayer.min_point_distance_px,
                "box_halfwidth_px": self.sprayer.box_halfwidth_px,
                "cm2_per_pixel": self.sprayer.cm2_per_pixel,
            },
        }

    @classmethod
    def from_json(cls, data: dict, out_dir) -> "RunConfig":
        sprayer = SprayerSpec(**data["sprayer"])
        return cls(dataset_root=data["dataset_root"], out_dir=str(out_dir),
                   engine=data["engine"], fusion=data["fusion"],
                   fusion_space=data["fusion_space"], cam_method=data["cam_method"],
                   cluster_method=data["cluster_method"], top_mode=data["top_mode"],
                   min_island_px=data["min_island_px"],
                   include_background=data["include_background"], sprayer=sprayer)


def make_engine_factory(engine_spec: str, cache_capacity: int = 512):
    """Return (factory, shared) where factory() builds an engine.  External
    engines are one shared child process (returned so callers can close it);
    toy engines are cheap and get built per worker."""
    if engine_spec.startswith("toy:"):
        try:
            seed = int(engine_spec.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigError(f"bad toy seed in {engine_spec!r}") from exc
        return (lambda: CachedEngine(ToyFcnEngine(seed), cache_capacity)), None
    if engine_spec.startswith("exec:"):
        command = engine_spec.split(":", 1)[1]
        if not command.strip():
            raise ConfigError("empty exec engine command")
        shared = ExternalEngine(command)
        return (lambda: CachedEngine(shared, cache_capacity)), shared
    raise ConfigError(f"unknown engine spec {engine_spec!r}")


def _cluster_points(islands, method: str, class_id: int,
                    spec: SprayerSpec) -> KeyPointSet:
    if method == "centres":
        return cluster_centres(islands, class_id)
    if not islands:
        return KeyPointSet(class_id=class_id, points=[])
    if method == "affinity":
        return cluster_affinity(island_points(islands), class_id)
    if method == "threshold":
        centres = cluster_centres(islands, class_id)
        return cluster_threshold(centres.points, spec.min_point_distance_px, class_id)
    raise ConfigError(f"unknown clustering method {method!r}")


def _process_image(cfg: RunConfig, engine, item, class_table: ClassTable,
                   stages: frozenset) -> dict:
    image = load_image(item.image_path)
    gt_mask = load_mask(item.mask_path, class_table.num_classes)
    gt_keypoints = (read_keypoints_csv(item.keypoints_path)
                    if item.keypoints_path else {})

    out = engine.forward(image)
    fused = fuse(out.main, out.aux, cfg.fusion, cfg.fusion_space)
    pred = argmax_mask(fused)
    if pred.shape != gt_mask.shape:
        raise DataError(f"{item.image_id}: prediction {pred.shape} does not "
                        f"match ground truth {gt_mask.shape}")
    record: dict = {
        "image_id": item.image_id,
        "fused": fused,
        "pred": pred,
        "tally": tally(pred, gt_mask, class_table.num_classes),
        "classes": {},
        "skipped_classes": [],
        "coverage": {},
        "curves": {},
        "cams": {},
        "islands_masks": {},
    }
    for class_id in class_table.foreground_ids:
        record["coverage"][class_id] = {
            "actual_cm2": coverage(gt_mask, class_id, cfg.sprayer),
            "predicted_cm2": coverage(pred, class_id, cfg.sprayer),
        }
    if not (("cam" in stages) or ("wsde" in stages)):
        return record

    cam_fn = ablation_cam if cfg.cam_method == "ablation" else score_cam
    for class_id in class_table.sprayed_ids:
        try:
            cam = cam_fn(engine, image, class_id, cfg.fusion, cfg.fusion_space)
        except ClassAbsentError:
            record["skipped_classes"].append(class_id)
            continue
        entry: dict = {}
        record["cams"][class_id] = cam
        if "cam" in stages:
            deletion = deletion_curve(engine, image, cam, class_id,
                                      cfg.fusion, cfg.fusion_space)
            insertion = insertion_curve(engine, image, cam, class_id,
                                        cfg.fusion, cfg.fusion_space)
            record["curves"][class_id] = {"deletion": deletion, "insertion": insertion}
            entry["deletion_auc"] = auc(deletion)
            entry["insertion_auc"] = auc(insertion)
        if "wsde" in stages:
            islands = extract_islands(cam, pred, class_id,
                                      min_island_px=cfg.min_island_px,
                                      top_mode=cfg.top_mode)
            keypoints = _cluster_points(islands, cfg.cluster_method, class_id,
                                        cfg.sprayer)
            gt_kp = KeyPointSet(class_id=class_id,
                                points=gt_keypoints.get(class_id, []))
            pointing = pointing_game(keypoints, gt_kp, cfg.sprayer.box_halfwidth_px)
            island_mask = np.zeros(pred.shape, dtype=np.float32)
            for isl in islands:
                island_mask[isl.pixels[:, 0], isl.pixels[:, 1]] = 1.0
            record["islands_masks"][class_id] = island_mask
            entry.update({
                "pred_points": [[int(r), int(c)] for r, c in keypoints.points],
                "gt_point_count": len(gt_kp.points),
                "hits": pointing.hits,
                "misses": pointing.misses,
            })
        record["classes"][class_id] = entry
    return record


def run_pipeline(cfg: RunConfig, stages=ALL_STAGES,
                 class_table: ClassTable = DEFAULT_CLASSES) -> dict:
    """Process the test split and return the report bundle; intermediates
    (fused logits, prediction masks, CAMs, island masks, curves, keypoints)
    are persisted under ``out_dir`` for replay and inspection."""
    stages = frozenset(stages)
    index = ingest(cfg.dataset_root, class_table)
    items = sorted(index.test_items, key=lambda it: it.image_id)

    factory, shared = make_engine_factory(cfg.engine, cfg.cache_capacity)
    jobs = 1 if shared is not None else cfg.jobs

    def process(engine, item):
        try:
            return _process_image(cfg, engine, item, class_table, stages)
        except SprayEvalError as exc:
            raise type(exc)(f"image {item.image_id}: {exc}") from exc

    results: dict[str, dict] = {}
    try:
        if jobs == 1:
            engine = factory()
            for item in items:
                results[item.image_id] = process(engine, item)
        else:
            local = threading.local()

            def work(item):
                engine = getattr(local, "engine", None)
                if engine is None:
                    engine = factory()
                    local.engine = engine
                return item.image_id, process(engine, item)

            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for image_id, record in pool.map(work, items):
                    results[image_id] = record
    finally:
        if shared is not None:
            shared.close()

    bundle = _reduce(cfg, index, [results[it.image_id] for it in items],
                     stages, class_table)
    _persist_intermediates(cfg, [results[it.image_id] for it in items])
    return bundle


def _reduce(cfg: RunConfig, index: DatasetIndex, records: list[dict],
            stages: frozenset, class_table: ClassTable) -> dict:
    num_classes = class_table.num_classes
    total_tally = ConfusionTally.zeros(num_classes)
    for record in records:
        total_tally = total_tally + record["tally"]

    bundle: dict = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_json(),
        "stages": sorted(stages),
        "dataset": dataset_statistics(index, cfg.sprayer, class_table),
        "per_image": [],
    }

    if "seg" in stages:
        bundle["segmentation"] = _segmentation_table(total_tally, cfg, class_table)

    if "cam" in stages:
        per_class: dict[int, list[tuple[float, float]]] = {}
        skipped = 0
        for record in records:
            skipped += len(record["skipped_classes"])
            for class_id, entry in record["classes"].items():
                if "deletion_auc" in entry:
                    per_class.setdefault(class_id, []).append(
                        (entry["deletion_auc"], entry["insertion_auc"]))
        class_means = {
            class_id: (float(np.mean([p[0] for p in pairs])),
                       float(np.mean([p[1] for p in pairs])), len(pairs))
            for class_id, pairs in sorted(per_class.items())
        }
        summary: dict = {
            "model": cfg.engine,
            "fusion": cfg.fusion,
            "cam": cfg.cam_method,
            "skipped_class_instances": skipped,
            "per_class": {
                class_table.name_of(cid): {
                    "deletion_auc": d, "insertion_auc": i, "images": n}
                for cid, (d, i, n) in class_means.items()
            },
        }
        if class_means:
            mean_del, mean_ins, interpretable = class_averaged_scores(
                [(d, i) for d, i, _ in class_means.values()])
            summary.update({
                "mean_deletion": mean_del,
                "mean_insertion": mean_ins,
                "difference": mean_ins - mean_del,
                "interpretable": interpretable,
            })
        bundle["faithfulness"] = summary

    if "wsde" in stages:
        per_image_pred, per_image_gt = [], []
        hits_misses: dict[int, list[int]] = {c: [0, 0] for c in class_table.sprayed_ids}
        for record in records:
            gt_counts: dict[int, int] = {}
            pred_counts: dict[int, int] = {}
            gt_kp = (read_keypoints_csv_for(record, index) or {})
            for class_id in class_table.sprayed_ids:
                gt_counts[class_id] = len(gt_kp.get(class_id, []))
                entry = record["classes"].get(class_id)
                if entry and "pred_points" in entry:
                    pred_counts[class_id] = len(entry["pred_points"])
                    hits_misses[class_id][0] += entry["hits"]
                    hits_misses[class_id][1] += entry["misses"]
                else:
                    pred_counts[class_id] = 0
            per_image_pred.append(pred_counts)
            per_image_gt.append(gt_counts)
        report = deposition_report(per_image_pred, per_image_gt, cfg.sprayer,
                                   {c: tuple(v) for c, v in hits_misses.items()},
                                   class_table)
        bundle["wsde"] = {
            "method": cfg.cluster_method,
            "rows": [{
                "class": row.class_name,
                "sprayed_class": class_table.name_of(row.class_id),
                "gt_points": row.gt_points,
                "pred_points": row.pred_points,
                "gt_ul": row.gt_ul,
                "predicted_ul": row.predicted_ul,
                "mean_abs_diff_ul": row.mean_abs_diff_ul,
                "hit_rate": row.hit_rate,
            } for row in report.rows],
            "total_abs_diff_ul": report.total_abs_diff_ul,
            "mean_hit_rate": report.mean_hit_rate,
        }

    for record in records:
        entry = {
            "image_id": record["image_id"],
            "skipped_classes": sorted(record["skipped_classes"]),
            "classes": {
                str(cid): {k: v for k, v in cls_entry.items()}
                for cid, cls_entry in sorted(record["classes"].items())
            },
            "coverage": {
                class_table.name_of(cid): vals
                for cid, vals in sorted(record["coverage"].items())
            },
        }
        if "wsde" in stages:
            weights = {}
            gt_kp = read_keypoints_csv_for(record, index) or {}
            for class_id in class_table.sprayed_ids:
                cls_entry = record["classes"].get(class_id, {})
                pred_n = len(cls_entry.get("pred_points", []))
                gt_n = len(gt_kp.get(class_id, []))
                hits = cls_entry.get("hits", 0)
                misses = cls_entry.get("misses", 0)
                weights[class_table.name_of(class_id)] = {
                    "actual_ul": gt_n * cfg.sprayer.unit_deposit_ul,
                    "predicted_ul": pred_n * cfg.sprayer.unit_deposit_ul,
                    "hit_rate": (hits / (hits + misses)) if (hits + misses) else 0.0,
                }
            entry["weights"] = weights
        bundle["per_image"].append(entry)
    return bundle


def read_keypoints_csv_for(record: dict, index: DatasetIndex):
    for item in index.items:
        if item.image_id == record["image_id"]:
            if item.keypoints_path:
                return read_keypoints_csv(item.keypoints_path)
            return {}
    return {}


def _nan_to_none(value: float):
    return None if math.isnan(value) else float(value)


def _segmentation_table(total: ConfusionTally, cfg: RunConfig,
                        class_table: ClassTable) -> dict:
    accuracy = pixel_accuracy_per_class(total)
    dice = dice_per_class(total)

    def per_class(values) -> dict:
        out = {}
        for class_id in class_table.foreground_ids:
            out[class_table.name_of(class_id)] = _nan_to_none(values[class_id])
        if cfg.include_background:
            out["background"] = _nan_to_none(values[0])
        return out

    return {
        "per_class_pixel_accuracy": per_class(accuracy),
        "micro_f1": micro_f1(total, include_background=cfg.include_background),
        "per_class_dice": per_class(dice),
        "miou": _nan_to_none(miou(total, include_background=False)),
        "miou_including_background": _nan_to_none(miou(total, include_background=True)),
        "tally": {
            "tp": [int(v) for v in total.tp],
            "fp": [int(v) for v in total.fp],
            "fn": [int(v) for v in total.fn],
        },
    }


def _persist_intermediates(cfg: RunConfig, records: list[dict]) -> None:
    out = Path(cfg.out_dir)
    inter = out / "intermediates"
    curves_dir = out / "curves"
    kp_dir = out / "keypoints"
    for d in (inter, curves_dir, kp_dir):
        d.mkdir(parents=True, exist_ok=True)

    keypoint_rows = []
    for record in records:
        image_id = record["image_id"]
        write_tensor(record["fused"], inter / f"{image_id}.fused.tnsr")
        write_mask(record["pred"], inter / f"{image_id}.pred.lmsk")
        for class_id, cam in record["cams"].items():
            write_tensor(cam.map, inter / f"{image_id}.c{class_id}.cam.tnsr")
        for class_id, mask in record["islands_masks"].items():
            write_tensor(mask, inter / f"{image_id}.c{class_id}.islands.tnsr")
        for class_id, pair in record["curves"].items():
            for kind, curve in pair.items():
                path = curves_dir / f"{image_id}.c{class_id}.{kind}.csv"
                _write_curve_csv(path, curve)
        for class_id, entry in record["classes"].items():
            for r, c in entry.get("pred_points", []):
                keypoint_rows.append((image_id, class_id, r, c))
    write_keypoints_csv(kp_dir / "predictions.csv", keypoint_rows)


def _write_curve_csv(path, curve: FaithfulnessCurve) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fraction", "confidence"])
        for f, c in zip(curve.fractions, curve.confidences):
            writer.writerow([repr(float(f)), repr(float(c))])


def read_curve_csv(path, kind: str) -> FaithfulnessCurve:
    fractions, confidences = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            fractions.append(float(row["fraction"]))
            confidences.append(float(row["confidence"]))
    return FaithfulnessCurve(fractions=np.array(fractions),
                             confidences=np.array(confidences), kind=kind)
