"""Weakly supervised deposition estimation: islands from CAM x prediction,
three island-clustering methods, the keypoint pointing game, deposition
weights in microliters, and coverage / hit-miss rates.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensors import DEFAULT_CLASSES, ClassTable, percentile


@dataclass(frozen=True)
class SprayerSpec:
    """Calibration constants of the precision sprayer under evaluation."""
    unit_deposit_ul: float = 20.9     # mean weight of one actuation
    deposit_std_ul: float = 0.16      # recorded for reference, not used in arithmetic
    min_point_distance_px: float = 10.0
    box_halfwidth_px: int = 5
    cm2_per_pixel: float = 0.01

    def __post_init__(self):
        for name in ("unit_deposit_ul", "deposit_std_ul", "min_point_distance_px",
                     "box_halfwidth_px", "cm2_per_pixel"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")


@dataclass
class Island:
    """One 8-connected component of the thresholded CAM x prediction mask."""
    pixels: np.ndarray            # (n, 2) row/col coordinates
    centroid: tuple[float, float]
    area: int


@dataclass
class KeyPointSet:
    """Per-class spray-actuation centre points."""
    class_id: int
    points: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class PointingResult:
    hits: int
    misses: int
    accuracy: float


# ---------------------------------------------------------------------------
# Connected components and island extraction
# ---------------------------------------------------------------------------

_NEIGHBORS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_NEIGHBORS_8 = _NEIGHBORS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def connected_components(mask: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label the true cells of a boolean mask; returns (labels, count) with
    labels 1..count and 0 for background."""
    if connectivity not in (4, 8):
        raise ContractError("connectivity must be 4 or 8")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ContractError("connected_components expects a rank-2 mask")
    offsets = _NEIGHBORS_8 if connectivity == 8 else _NEIGHBORS_4
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for sr in range(h):
        for sc in range(w):
            if not mask[sr, sc] or labels[sr, sc]:
                continue
            count += 1
            queue = deque([(sr, sc)])
            labels[sr, sc] = count
            while queue:
                r, c = queue.popleft()
                for dr, dc in offsets:
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not labels[nr, nc]:
                        labels[nr, nc] = count
                        queue.append((nr, nc))
    return labels, count


def extract_islands(cam, pred: np.ndarray, class_id: int,
                    min_island_px: int = 4, top_mode: str = "percentile") -> list[Island]:
    """Islands = 8-connected components of (CAM >= top-region threshold) AND
    (prediction == class), dropping components below ``min_island_px``.

    ``top_mode`` selects the top-10% reading: "percentile" keeps CAM values
    at or above the 90th percentile, "value" keeps values >= 0.9 * max.
    """
    values = cam.map if hasattr(cam, "map") else np.asarray(cam)
    if values.shape != pred.shape:
        raise ContractError(f"CAM {values.shape} and prediction {pred.shape} disagree")
    if top_mode == "percentile":
        threshold = percentile(values, 90.0)
    elif top_mode == "value":
        threshold = 0.9 * float(values.max())
    else:
        raise ContractError(f"unknown top mode {top_mode!r}")
    binary = (values >= threshold) & (pred == class_id)
    labels, count = connected_components(binary, connectivity=8)
    islands = []
    for k in range(1, count + 1):
        rows, cols = np.nonzero(labels == k)
        if len(rows) < min_island_px:
            continue
        pixels = np.stack([rows, cols], axis=1).astype(np.int64)
        centroid = (float(rows.mean()), float(cols.mean()))
        islands.append(Island(pixels=pixels, centroid=centroid, area=len(rows)))
    return islands


def island_points(islands: list[Island], cap: int = 1024) -> list[tuple[int, int]]:
    """All island pixels as clustering points, row-major per island.

    Images with very large islands are deterministically subsampled with an
    even stride so affinity propagation stays O(cap^2).
    """
    points = [(int(r), int(c)) for isl in islands for r, c in isl.pixels]
    if len(points) > cap:
        idx = np.linspace(0, len(points) - 1, cap).round().astype(int)
        points = [points[i] for i in idx]
    return points


# ---------------------------------------------------------------------------
# Clustering methods
# ---------------------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def cluster_centres(islands: list[Island], class_id: int) -> KeyPointSet:
    """Baseline: one keypoint per island at its pixel-rounded centroid."""
    points = [(_round_half_up(r), _round_half_up(c)) for r, c in
              (isl.centroid for isl in islands)]
    return KeyPointSet(class_id=class_id, points=points)


@dataclass
class APResult:
    exemplar_indices: np.ndarray
    converged: bool
    iterations: int


def affinity_propagation(points, damping: float = 0.5, max_iter: int = 200,
                         convergence_iter: int = 15) -> APResult:
    """Exemplar selection by message passing on s(i, k) = -||x_i - x_k||^2
    with the preference set to the median off-diagonal similarity.

    Deterministic: no random tie-breaking noise is injected.  Convergence
    means the exemplar set was unchanged for ``convergence_iter`` successive
    iterations.  If no point accumulates positive exemplar evidence (fully
    degenerate input such as identical points), the single point with the
    highest evidence is returned.
    """
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("affinity propagation needs at least one 2-d point")
    n = len(x)
    if n == 1:
        return APResult(np.array([0]), True, 0)

    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    s = -d2
    off_diagonal = s[~np.eye(n, dtype=bool)]
    np.fill_diagonal(s, np.median(off_diagonal))

    a = np.zeros((n, n))
    r = np.zeros((n, n))
    idx = np.arange(n)
    previous: frozenset[int] | None = None
    stable = 0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # responsibilities
        a_plus_s = a + s
        first_k = a_plus_s.argmax(axis=1)
        first = a_plus_s[idx, first_k]
        a_plus_s[idx, first_k] = -np.inf
        second = a_plus_s.max(axis=1)
        r_new = s - first[:, None]
        r_new[idx, first_k] = s[idx, first_k] - second
        r = damping * r + (1.0 - damping) * r_new
        # availabilities
        r_pos = np.maximum(r, 0.0)
        r_pos[idx, idx] = r[idx, idx]
        column = r_pos.sum(axis=0)
        a_new = column[None, :] - r_pos
        diag = a_new[idx, idx].copy()
        a_new = np.minimum(a_new, 0.0)
        a_new[idx, idx] = diag
        a = damping * a + (1.0 - damping) * a_new

        exemplars = frozenset(np.flatnonzero(np.diag(a) + np.diag(r) > 0).tolist())
        if exemplars == previous:
            stable += 1
            if stable >= convergence_iter:
                converged = True
                break
        else:
            stable = 0
        previous = exemplars

    evidence = np.diag(a) + np.diag(r)
    chosen = np.flatnonzero(evidence > 0)
    if len(chosen) == 0:
        chosen = np.array([int(np.argmax(evidence))])
    else:
        # classical refinement: assign points, re-pick the similarity-maximal
        # exemplar inside each cluster
        assign = np.argmax(s[:, chosen], axis=1)
        assign[chosen] = np.arange(len(chosen))
        for k in range(len(chosen)):
            members = np.flatnonzero(assign == k)
            best = members[np.argmax(s[np.ix_(members, members)].sum(axis=0))]
            chosen[k] = best
        chosen = np.unique(chosen)
    return APResult(exemplar_indices=chosen, converged=converged, iterations=iterations)


def cluster_affinity(points, class_id: int) -> KeyPointSet:
    """Affinity-propagation exemplars of the given points as keypoints."""
    pts = [(int(r), int(c)) for r, c in points]
    if not pts:
        raise ValueError("cluster_affinity needs at least one point")
    result = affinity_propagation(np.asarray(pts, dtype=np.float64))
    if not result.converged:
        warnings.warn("affinity propagation did not converge; returning the "
                      "current exemplar set", RuntimeWarning, stacklevel=2)
    seen: dict[tuple[int, int], None] = {}
    for i in result.exemplar_indices:
        seen.setdefault(pts[int(i)], None)
    return KeyPointSet(class_id=class_id, points=list(seen))


def cluster_threshold(points, min_dist: float, class_id: int) -> KeyPointSet:
    """Greedy row-major scan keeping each point only if it lies at least
    ``min_dist`` from every point already kept."""
    ordered = sorted((int(r), int(c)) for r, c in points)
    kept: list[tuple[int, int]] = []
    for p in ordered:
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_dist ** 2 for q in kept):
            kept.append(p)
    return KeyPointSet(class_id=class_id, points=kept)


# ---------------------------------------------------------------------------
# Pointing game
# ---------------------------------------------------------------------------

def pointing_game(pred_points: KeyPointSet, gt_points: KeyPointSet,
                  box_halfwidth_px: int) -> PointingResult:
    """Each ground-truth point spans a (2*halfwidth+1)-sided box; predictions
    match greedily by ascending distance, one hit per box, and every
    unmatched prediction counts as a miss."""
    if pred_points.class_id != gt_points.class_id:
        raise ContractError("pointing game compares keypoints of one class")
    preds = pred_points.points
    gts = gt_points.points
    if not preds:
        return PointingResult(hits=0, misses=0, accuracy=0.0)
    candidates = []
    for pi, (pr, pc) in enumerate(preds):
        for gi, (gr, gc) in enumerate(gts):
            if abs(pr - gr) <= box_halfwidth_px and abs(pc - gc) <= box_halfwidth_px:
                dist = float(np.hypot(pr - gr, pc - gc))
                candidates.append((dist, pi, gi))
    candidates.sort()
    pred_used = [False] * len(preds)
    gt_used = [False] * len(gts)
    hits = 0
    for _, pi, gi in candidates:
        if not pred_used[pi] and not gt_used[gi]:
            pred_used[pi] = True
            gt_used[gi] = True
            hits += 1
    misses = len(preds) - hits
    return PointingResult(hits=hits, misses=misses,
                          accuracy=hits / (hits + misses))


# ---------------------------------------------------------------------------
# Deposition and coverage arithmetic
# ---------------------------------------------------------------------------

def estimate_deposition(point_count: int, spec: SprayerSpec) -> float:
    """Predicted weight: actuation count times the calibrated unit deposit."""
    if point_count < 0:
        raise ContractError("point count must be non-negative")
    return point_count * spec.unit_deposit_ul


@dataclass
class ClassDeposition:
    class_id: int            # sprayed class the detection ran on
    base_class_id: int       # base class the row is reported under
    class_name: str
    gt_points: int
    pred_points: int
    gt_ul: float
    predicted_ul: float
    mean_abs_diff_ul: float
    hit_rate: float | None


@dataclass
class DepositionReport:
    rows: list[ClassDeposition]
    total_abs_diff_ul: float
    mean_hit_rate: float | None


def deposition_report(per_image_pred: list[dict[int, int]],
                      per_image_gt: list[dict[int, int]],
                      spec: SprayerSpec,
                      hits_misses: dict[int, tuple[int, int]] | None = None,
                      class_table: ClassTable = DEFAULT_CLASSES) -> DepositionReport:
    """Class-wise mean absolute deposition difference over a test set.

    ``per_image_pred`` and ``per_image_gt`` are parallel lists of
    {sprayed class id: keypoint count} per image.  ``hits_misses`` carries
    pooled pointing-game (hits, misses) per sprayed class when available.
    Rows are reported under the sprayed class's base-class name.
    """
    if len(per_image_pred) != len(per_image_gt):
        raise ContractError("prediction and ground-truth image lists differ in length")
    unit = spec.unit_deposit_ul
    rows = []
    rates = []
    for sprayed_id in class_table.sprayed_ids:
        pred_counts = np.array([img.get(sprayed_id, 0) for img in per_image_pred], dtype=np.int64)
        gt_counts = np.array([img.get(sprayed_id, 0) for img in per_image_gt], dtype=np.int64)
        diffs = np.abs(pred_counts - gt_counts) * unit
        mean_diff = float(diffs.mean()) if len(diffs) else 0.0
        rate = None
        if hits_misses and sprayed_id in hits_misses:
            h, m = hits_misses[sprayed_id]
            rate = h / (h + m) if (h + m) > 0 else 0.0
            rates.append(rate)
        base_id = class_table.base_of(sprayed_id)
        rows.append(ClassDeposition(
            class_id=sprayed_id,
            base_class_id=base_id,
            class_name=class_table.name_of(base_id),
            gt_points=int(gt_counts.sum()),
            pred_points=int(pred_counts.sum()),
            gt_ul=float(gt_counts.sum()) * unit,
            predicted_ul=float(pred_counts.sum()) * unit,
            mean_abs_diff_ul=mean_diff,
            hit_rate=rate,
        ))
    total = float(sum(row.mean_abs_diff_ul for row in rows))
    mean_rate = float(np.mean(rates)) if rates else None
    return DepositionReport(rows=rows, total_abs_diff_ul=total, mean_hit_rate=mean_rate)


def coverage(mask: np.ndarray, class_id: int, spec: SprayerSpec) -> float:
    """Area of one class in cm^2 from its pixel count and the camera scale."""
    count = int((np.asarray(mask) == class_id).sum())
    return count * spec.cm2_per_pixel


def hit_miss_rate(sprayed_instances: int, unsprayed_instances: int) -> tuple[float, float] | None:
    """(hit %, miss %) from instance counts; None when there are no instances."""
    total = sprayed_instances + unsprayed_instances
    if total <= 0:
        return None
    hit = 100.0 * sprayed_instances / total
    return hit, 100.0 - hit
