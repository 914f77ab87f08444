"""
Weakly supervised deposition estimation
=======================================

From a CAM and a prediction mask to sprayed microliters:

1. threshold the CAM at its top-10% region, intersect with the predicted
   class, and extract the 8-connected "islands";
2. reduce islands to actuation keypoints (island centres, affinity
   propagation over island pixels, or distance-threshold deduplication);
3. score the keypoints with the pointing game against ground truth;
4. multiply counts by the calibrated unit deposit (20.9 uL per actuation).
"""
import numpy as np

from sprayeval import (SprayerSpec, cluster_affinity, cluster_centres,
                       cluster_threshold, deposition_report,
                       estimate_deposition, extract_islands, island_points,
                       pointing_game)
from sprayeval.synthetic import plant_actuation_scene

spec = SprayerSpec()  # unit deposit 20.9 uL, 0.01 cm^2 per pixel, ...

# a scene with exactly five planted actuations of sprayed lettuce (class 4)
cam, pred, gt = plant_actuation_scene(n=5, seed=21)
print(f"scene: {len(gt.points)} ground-truth actuations at {gt.points}")

islands = extract_islands(cam, pred, class_id=4, min_island_px=4)
print(f"islands after CAM x prediction: {len(islands)} "
      f"(areas {[i.area for i in islands]})")

keypoints = {
    "centres": cluster_centres(islands, 4),
    "affinity": cluster_affinity(island_points(islands), 4),
    "threshold": cluster_threshold(cluster_centres(islands, 4).points,
                                   spec.min_point_distance_px, 4),
}
for method, kp in keypoints.items():
    result = pointing_game(kp, gt, spec.box_halfwidth_px)
    ul = estimate_deposition(len(kp.points), spec)
    print(f"{method:10s} {len(kp.points)} keypoints, hit rate "
          f"{result.accuracy:.2f}, estimated deposition {ul:.1f} uL")

# a test-set level report: per-class mean absolute difference in uL
per_image_pred = [{4: 5, 5: 2}, {4: 1, 5: 3, 6: 1}]
per_image_gt = [{4: 5, 5: 3}, {4: 1, 5: 3, 6: 0}]
report = deposition_report(per_image_pred, per_image_gt, spec,
                           hits_misses={4: (6, 0), 5: (4, 1), 6: (0, 1)})
for row in report.rows:
    print(f"  {row.class_name:12s} gt {row.gt_ul:6.1f} uL   predicted "
          f"{row.predicted_ul:6.1f} uL   mean |diff| {row.mean_abs_diff_ul:5.1f} uL   "
          f"hit rate {row.hit_rate:.2f}")
print(f"total |diff| {report.total_abs_diff_ul:.1f} uL, "
      f"mean hit rate {report.mean_hit_rate:.2f}")
