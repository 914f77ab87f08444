"""Report emission: CSV/JSON tables, SVG charts, and PNG overlays."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DataError
from .tensors import DEFAULT_CLASSES, read_mask, read_tensor

_PALETTE = {
    0: (30, 30, 30),
    1: (60, 160, 60),
    2: (120, 200, 80),
    3: (170, 190, 60),
    4: (80, 120, 220),
    5: (130, 170, 240),
    6: (190, 150, 250),
}


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def render_reports(bundle: dict, out_dir) -> list[Path]:
    """Write the bundle plus every table/chart/overlay it implies; returns
    the list of files written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    bundle_path = out / "bundle.json"
    bundle_path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    written.append(bundle_path)

    config = bundle["config"]
    model, fusion = config["engine"], config["fusion"]
    class_names = [n for n in DEFAULT_CLASSES.names if n != "background"]

    if "segmentation" in bundle:
        seg = bundle["segmentation"]
        for key, fname in (("per_class_pixel_accuracy", "seg_accuracy.csv"),
                           ("per_class_dice", "seg_dice.csv")):
            summary_key = "micro_f1" if key == "per_class_pixel_accuracy" else "miou"
            header = ["model", "fusion"] + class_names + [summary_key]
            row = [model, fusion] + [seg[key].get(n) for n in class_names] \
                + [seg[summary_key]]
            path = out / fname
            write_csv(path, header, [row])
            written.append(path)

    if "faithfulness" in bundle:
        summary_path = out / "faithfulness_summary.json"
        summary_path.write_text(json.dumps(bundle["faithfulness"], indent=2,
                                           sort_keys=True) + "\n")
        written.append(summary_path)
        svg_path = out / "faithfulness_bars.svg"
        _render_faithfulness_bars(bundle["faithfulness"], svg_path)
        written.append(svg_path)
        written.extend(_render_curve_svgs(out))

    if "wsde" in bundle:
        wsde = bundle["wsde"]
        path = out / "wsde_deposition.csv"
        rows = [[model, fusion, wsde["method"], row["class"],
                 row["mean_abs_diff_ul"], row["gt_ul"], row["predicted_ul"],
                 row["hit_rate"]] for row in wsde["rows"]]
        rows.append([model, fusion, wsde["method"], "total",
                     wsde["total_abs_diff_ul"], None, None, wsde["mean_hit_rate"]])
        write_csv(path, ["model", "fusion", "method", "class",
                         "mean_abs_diff_ul", "gt_ul", "predicted_ul", "hit_rate"],
                  rows)
        written.append(path)

        cw_path = out / "coverage_weight.csv"
        cw_rows = []
        for entry in bundle["per_image"]:
            weights = entry.get("weights", {})
            for name, cov in entry["coverage"].items():
                w = weights.get(name, {})
                cw_rows.append([entry["image_id"], name,
                                cov["actual_cm2"], cov["predicted_cm2"],
                                w.get("actual_ul"), w.get("predicted_ul"),
                                w.get("hit_rate")])
        write_csv(cw_path, ["image_id", "class", "actual_coverage_cm2",
                            "predicted_coverage_cm2", "actual_weight_ul",
                            "predicted_weight_ul", "hit_rate"], cw_rows)
        written.append(cw_path)

    if "coverage_rate" in bundle.get("dataset", {}):
        path = out / "coverage_rate.csv"
        rows = [[r["class"], r["coverage_cm2"], r["average_coverage_cm2"],
                 r["miss_pct"], r["hit_pct"]]
                for r in bundle["dataset"]["coverage_rate"]]
        write_csv(path, ["class", "coverage_cm2", "average_coverage_cm2",
                         "miss_pct", "hit_pct"], rows)
        written.append(path)

    written.extend(_render_overlays(bundle, out))
    return written


# ---------------------------------------------------------------------------
# SVG rendering (hand-rolled, no plotting dependency)
# ---------------------------------------------------------------------------

def _svg_document(body: str, width: int, height: int) -> str:
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n{body}</svg>\n')


def _render_faithfulness_bars(summary: dict, path: Path) -> None:
    entries = list(summary.get("per_class", {}).items())
    if "mean_deletion" in summary:
        entries.append(("mean", {"deletion_auc": summary["mean_deletion"],
                                 "insertion_auc": summary["mean_insertion"]}))
    width = max(320, 90 * len(entries) + 60)
    height = 240
    parts = [f'<text x="10" y="16" font-size="12">Deletion vs Insertion AUC '
             f'({summary.get("cam", "?")} CAM, {summary.get("fusion", "?")} fusion)</text>']
    base_y, scale = 210, 170
    for i, (name, vals) in enumerate(entries):
        x = 50 + 90 * i
        for j, (key, color) in enumerate((("deletion_auc", "#c0504d"),
                                          ("insertion_auc", "#4f81bd"))):
            v = float(vals[key])
            bar_h = max(1.0, v * scale)
            parts.append(f'<rect x="{x + 36 * j}" y="{base_y - bar_h:.1f}" '
                         f'width="30" height="{bar_h:.1f}" fill="{color}"/>')
            parts.append(f'<text x="{x + 36 * j}" y="{base_y - bar_h - 4:.1f}" '
                         f'font-size="9">{v:.3f}</text>')
        parts.append(f'<text x="{x}" y="{base_y + 14}" font-size="10">{name}</text>')
    path.write_text(_svg_document("\n".join(parts) + "\n", width, height))


def _render_curve_svgs(out: Path) -> list[Path]:
    from .pipeline import read_curve_csv

    written = []
    curves_dir = out / "curves"
    if not curves_dir.is_dir():
        return written
    for csv_path in sorted(curves_dir.glob("*.csv")):
        kind = csv_path.stem.rsplit(".", 1)[-1]
        curve = read_curve_csv(csv_path, kind)
        svg_path = csv_path.with_suffix(".svg")
        w, h, pad = 320, 220, 30
        points = " ".join(
            f"{pad + f * (w - 2 * pad):.2f},{h - pad - c * (h - 2 * pad):.2f}"
            for f, c in zip(curve.fractions, curve.confidences))
        body = (f'<rect x="{pad}" y="{pad}" width="{w - 2 * pad}" '
                f'height="{h - 2 * pad}" fill="none" stroke="#888"/>\n'
                f'<polyline points="{points}" fill="none" stroke="#4f81bd" '
                f'stroke-width="1.5"/>\n'
                f'<text x="{pad}" y="16" font-size="11">{csv_path.stem}</text>\n')
        svg_path.write_text(_svg_document(body, w, h))
        written.append(svg_path)
    return written


# ---------------------------------------------------------------------------
# PNG overlays
# ---------------------------------------------------------------------------

def _render_overlays(bundle: dict, out: Path) -> list[Path]:
    from PIL import Image, ImageDraw

    written: list[Path] = []
    inter = out / "intermediates"
    overlays = out / "overlays"
    if not inter.is_dir():
        return written
    overlays.mkdir(parents=True, exist_ok=True)

    for entry in bundle["per_image"]:
        image_id = entry["image_id"]
        pred_path = inter / f"{image_id}.pred.lmsk"
        if not pred_path.exists():
            continue
        pred = read_mask(pred_path)
        rgb = np.zeros((*pred.shape, 3), dtype=np.uint8)
        for class_id, color in _PALETTE.items():
            rgb[pred == class_id] = color
        path = overlays / f"{image_id}.pred.png"
        Image.fromarray(rgb, mode="RGB").save(path)
        written.append(path)

        for class_key, cls_entry in entry["classes"].items():
            cam_path = inter / f"{image_id}.c{class_key}.cam.tnsr"
            if cam_path.exists():
                cam = read_tensor(cam_path)
                gray = (np.clip(cam, 0.0, 1.0) * 255.0).round().astype(np.uint8)
                path = overlays / f"{image_id}.c{class_key}.cam.png"
                Image.fromarray(gray, mode="L").save(path)
                written.append(path)
            isl_path = inter / f"{image_id}.c{class_key}.islands.tnsr"
            if isl_path.exists():
                isl = read_tensor(isl_path)
                canvas = np.zeros((*isl.shape, 3), dtype=np.uint8)
                canvas[isl > 0.5] = (240, 240, 240)
                img = Image.fromarray(canvas, mode="RGB")
                draw = ImageDraw.Draw(img)
                for r, c in cls_entry.get("pred_points", []):
                    draw.line([(c - 3, r), (c + 3, r)], fill=(220, 40, 40))
                    draw.line([(c, r - 3), (c, r + 3)], fill=(220, 40, 40))
                path = overlays / f"{image_id}.c{class_key}.islands.png"
                img.save(path)
                written.append(path)
    return written
