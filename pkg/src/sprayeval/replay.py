"""Recompute every number in a persisted report bundle from the saved
intermediates and compare against the bundle, proving the orchestration
added no numerics of its own.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import ingest, load_mask, read_keypoints_csv
from .errors import DataError
from .faithfulness import auc, class_averaged_scores
from .pipeline import (RunConfig, _cluster_points, _segmentation_table,
                       read_curve_csv)
from .segmetrics import ConfusionTally, tally
from .tensors import DEFAULT_CLASSES, argmax_mask, read_mask, read_tensor
from .wsde import (KeyPointSet, coverage, deposition_report, extract_islands,
                   pointing_game)

TOLERANCE = 1e-9


@dataclass
class ReplayCheck:
    name: str
    ok: bool
    detail: str = ""


def _close(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return math.isclose(float(a), float(b), rel_tol=0.0, abs_tol=TOLERANCE)


def _compare_scalar(checks: list, name: str, recomputed, stored) -> None:
    if _close(recomputed, stored):
        checks.append(ReplayCheck(name, True))
    else:
        checks.append(ReplayCheck(name, False, f"recomputed {recomputed} != stored {stored}"))


def replay(out_dir, class_table=DEFAULT_CLASSES) -> list[ReplayCheck]:
    out = Path(out_dir)
    bundle_path = out / "bundle.json"
    if not bundle_path.exists():
        raise DataError(f"no bundle.json under {out}")
    bundle = json.loads(bundle_path.read_text())
    cfg = RunConfig.from_json(bundle["config"], out)
    index = ingest(cfg.dataset_root, class_table)
    items = {it.image_id: it for it in index.items}
    inter = out / "intermediates"
    checks: list[ReplayCheck] = []

    total = ConfusionTally.zeros(class_table.num_classes)
    per_image_pred, per_image_gt = [], []
    hits_misses = {c: [0, 0] for c in class_table.sprayed_ids}
    have_wsde = "wsde" in bundle.get("stages", [])

    for entry in bundle["per_image"]:
        image_id = entry["image_id"]
        item = items.get(image_id)
        if item is None:
            checks.append(ReplayCheck(f"{image_id}: dataset item", False, "missing"))
            continue
        fused = read_tensor(inter / f"{image_id}.fused.tnsr")
        stored_pred = read_mask(inter / f"{image_id}.pred.lmsk")
        pred = argmax_mask(fused)
        checks.append(ReplayCheck(
            f"{image_id}: argmax(fused) == stored prediction",
            bool(np.array_equal(pred, stored_pred))))
        gt_mask = load_mask(item.mask_path, class_table.num_classes)
        total = total + tally(pred, gt_mask, class_table.num_classes)

        for class_id in class_table.foreground_ids:
            stored = entry["coverage"][class_table.name_of(class_id)]
            _compare_scalar(checks, f"{image_id}: actual coverage {class_id}",
                            coverage(gt_mask, class_id, cfg.sprayer),
                            stored["actual_cm2"])
            _compare_scalar(checks, f"{image_id}: predicted coverage {class_id}",
                            coverage(pred, class_id, cfg.sprayer),
                            stored["predicted_cm2"])

        gt_kp = read_keypoints_csv(item.keypoints_path) if item.keypoints_path else {}
        pred_counts, gt_counts = {}, {}
        for class_id in class_table.sprayed_ids:
            cls = entry["classes"].get(str(class_id), {})
            gt_counts[class_id] = len(gt_kp.get(class_id, []))
            if "deletion_auc" in cls:
                for kind in ("deletion", "insertion"):
                    curve = read_curve_csv(out / "curves" / f"{image_id}.c{class_id}.{kind}.csv",
                                           kind)
                    _compare_scalar(checks, f"{image_id}/c{class_id}: {kind} AUC",
                                    auc(curve), cls[f"{kind}_auc"])
            if have_wsde and "pred_points" in cls:
                cam = read_tensor(inter / f"{image_id}.c{class_id}.cam.tnsr")
                islands = extract_islands(cam, pred, class_id,
                                          min_island_px=cfg.min_island_px,
                                          top_mode=cfg.top_mode)
                keypoints = _cluster_points(islands, cfg.cluster_method,
                                            class_id, cfg.sprayer)
                recomputed = [[int(r), int(c)] for r, c in keypoints.points]
                checks.append(ReplayCheck(
                    f"{image_id}/c{class_id}: keypoints reproduce",
                    recomputed == cls["pred_points"],
                    "" if recomputed == cls["pred_points"]
                    else f"{recomputed} != {cls['pred_points']}"))
                pointing = pointing_game(
                    keypoints, KeyPointSet(class_id, gt_kp.get(class_id, [])),
                    cfg.sprayer.box_halfwidth_px)
                checks.append(ReplayCheck(
                    f"{image_id}/c{class_id}: pointing game reproduces",
                    pointing.hits == cls["hits"] and pointing.misses == cls["misses"]))
                pred_counts[class_id] = len(keypoints.points)
                hits_misses[class_id][0] += pointing.hits
                hits_misses[class_id][1] += pointing.misses
            else:
                pred_counts[class_id] = 0
        per_image_pred.append(pred_counts)
        per_image_gt.append(gt_counts)

    if "segmentation" in bundle:
        seg = _segmentation_table(total, cfg, class_table)
        stored = bundle["segmentation"]
        for key in ("micro_f1", "miou", "miou_including_background"):
            _compare_scalar(checks, f"segmentation: {key}", seg[key], stored[key])
        for table in ("per_class_pixel_accuracy", "per_class_dice"):
            for name, value in seg[table].items():
                _compare_scalar(checks, f"segmentation: {table}[{name}]",
                                value, stored[table][name])

    if "faithfulness" in bundle and "mean_deletion" in bundle["faithfulness"]:
        stored = bundle["faithfulness"]
        pairs = [(v["deletion_auc"], v["insertion_auc"])
                 for v in stored["per_class"].values()]
        mean_del, mean_ins, _ = class_averaged_scores(pairs)
        _compare_scalar(checks, "faithfulness: mean deletion", mean_del,
                        stored["mean_deletion"])
        _compare_scalar(checks, "faithfulness: mean insertion", mean_ins,
                        stored["mean_insertion"])

    if have_wsde and "wsde" in bundle:
        report = deposition_report(per_image_pred, per_image_gt, cfg.sprayer,
                                   {c: tuple(v) for c, v in hits_misses.items()},
                                   class_table)
        stored = bundle["wsde"]
        _compare_scalar(checks, "wsde: total abs difference",
                        report.total_abs_diff_ul, stored["total_abs_diff_ul"])
        _compare_scalar(checks, "wsde: mean hit rate",
                        report.mean_hit_rate, stored["mean_hit_rate"])
        for row, stored_row in zip(report.rows, stored["rows"]):
            _compare_scalar(checks, f"wsde[{row.class_name}]: mean abs diff",
                            row.mean_abs_diff_ul, stored_row["mean_abs_diff_ul"])
            _compare_scalar(checks, f"wsde[{row.class_name}]: predicted ul",
                            row.predicted_ul, stored_row["predicted_ul"])
    return checks
