"""FROC analysis over ranked detections.

A detection record condenses one image: how many true positives the top-k
candidates yield, for every k. Curves, the area summary, the count-driven
operating point, and the bootstrap all derive from these records with
integer accumulations, so results do not depend on image order.
"""

import math
from dataclasses import dataclass

import numpy as np

from .assignment import SENTINEL, _pair_cost

MAX_COUNT = 35
_BOOTSTRAP_STREAM = 400
_MAX_REDRAWS = 100


@dataclass(frozen=True)
class DetectionRecord:
    """Per-image matching summary: tp_at_k[k] is the true-positive count
    when only the k highest-ranked candidates are kept."""

    tp_at_k: tuple
    n_gt: int

    @property
    def n_candidates(self):
        return len(self.tp_at_k) - 1


def _feasible_dots(candidates, sample, criterion, radius):
    out = []
    for cand in candidates:
        dots = tuple(
            b
            for b, (dot, box) in enumerate(zip(sample.gt_dots, sample.gt_boxes))
            if _pair_cost(cand, dot, box, criterion, radius) < SENTINEL
        )
        out.append(dots)
    return out


def detection_record(candidates, sample, criterion="box", radius=6.0):
    """Match candidates greedily-optimally at every rank cutoff.

    Maximum-cardinality matching is grown one candidate at a time with
    augmenting paths; the count after each insertion is exact because a new
    candidate changes the optimum by at most one.
    """
    feasible = _feasible_dots(candidates, sample, criterion, radius)
    match_of_dot = {}

    def augment(cand, visited):
        for d in feasible[cand]:
            if d in visited:
                continue
            visited.add(d)
            if d not in match_of_dot or augment(match_of_dot[d], visited):
                match_of_dot[d] = cand
                return True
        return False

    counts = [0]
    matched = 0
    for a in range(len(feasible)):
        if augment(a, set()):
            matched += 1
        counts.append(matched)
    return DetectionRecord(tp_at_k=tuple(counts), n_gt=len(sample.gt_dots))


@dataclass(frozen=True)
class FrocCurve:
    """points holds (k, fpavg, sensitivity) rows for k = 0..max candidates."""

    points: tuple
    n_images: int
    n_gt: int


def _rank_tables(records):
    """Dense per-image cutoff tables: true positives and candidates taken."""
    k_max = max(r.n_candidates for r in records)
    n = len(records)
    tp = np.zeros((n, k_max + 1), dtype=np.int64)
    taken = np.zeros((n, k_max + 1), dtype=np.int64)
    for i, rec in enumerate(records):
        ks = np.minimum(np.arange(k_max + 1), rec.n_candidates)
        tp[i] = np.asarray(rec.tp_at_k, dtype=np.int64)[ks]
        taken[i] = ks
    gt = np.array([r.n_gt for r in records], dtype=np.int64)
    return tp, taken, gt


def curve_from_records(records):
    """Pool per-image records into one FROC curve."""
    if not records:
        raise ValueError("need at least one detection record")
    tp, taken, gt = _rank_tables(records)
    total_gt = int(gt.sum())
    if total_gt == 0:
        raise ValueError("cannot compute sensitivity with zero ground-truth dots")
    n = len(records)
    tp_k = tp.sum(axis=0)
    fp_k = taken.sum(axis=0) - tp_k
    points = tuple(
        (k, fp_k[k] / n, tp_k[k] / total_gt) for k in range(tp.shape[1])
    )
    return FrocCurve(points=points, n_images=n, n_gt=total_gt)


def froc_curve(per_image_candidates, samples, criterion="box", radius=6.0):
    """FROC curve for ranked candidate lists against their samples."""
    if len(per_image_candidates) != len(samples):
        raise ValueError("candidate lists and samples must align")
    records = [
        detection_record(cands, sample, criterion, radius)
        for cands, sample in zip(per_image_candidates, samples)
    ]
    return curve_from_records(records)


def _points_xy(curve):
    pts = curve.points if isinstance(curve, FrocCurve) else curve
    return [(float(p[-2]), float(p[-1])) for p in pts]


def fauc(curve, fp_max):
    """Percent of the area under the FROC curve up to fp_max false
    positives per image, relative to the perfect score.

    The curve is clipped at fp_max by linear interpolation; if it ends
    earlier, the final sensitivity extends horizontally.
    """
    if not fp_max > 0:
        raise ValueError("fp_max must be positive")
    pts = _points_xy(curve)
    if not pts:
        return 0.0
    area = 0.0
    x_prev, y_prev = pts[0]
    x_prev = min(x_prev, fp_max)
    for x, y in pts[1:]:
        if x_prev >= fp_max:
            break
        if x > fp_max:
            y = y_prev + (y - y_prev) * (fp_max - x_prev) / (x - x_prev)
            x = fp_max
        area += (x - x_prev) * (y_prev + y) / 2.0
        x_prev, y_prev = x, y
    if x_prev < fp_max:
        area += (fp_max - x_prev) * y_prev
    return area / fp_max * 100.0


def predicted_count(prediction):
    """Round a raw count prediction half away from zero, clamped to the
    representable range of dots per image."""
    n = math.floor(float(prediction) + 0.5)
    return int(min(MAX_COUNT, max(0, n)))


@dataclass(frozen=True)
class OperatingPoint:
    sensitivity: float
    fpavg: float
    fnavg: float
    tp: int
    fp: int
    fn: int
    n_images: int
    n_gt: int


def operating_point_metrics(
    predictions, per_image_candidates, samples, criterion="box", radius=6.0
):
    """Detection metrics when each image keeps as many candidates as its
    rounded count prediction."""
    if not (len(predictions) == len(per_image_candidates) == len(samples)):
        raise ValueError("predictions, candidate lists and samples must align")
    if not samples:
        raise ValueError("need at least one image")
    tp_total = 0
    fp_total = 0
    fn_total = 0
    gt_total = 0
    for pred, cands, sample in zip(predictions, per_image_candidates, samples):
        rec = detection_record(cands, sample, criterion, radius)
        k = min(predicted_count(pred), rec.n_candidates)
        tp = rec.tp_at_k[k]
        tp_total += tp
        fp_total += k - tp
        fn_total += rec.n_gt - tp
        gt_total += rec.n_gt
    if gt_total == 0:
        raise ValueError("cannot compute sensitivity with zero ground-truth dots")
    n = len(samples)
    return OperatingPoint(
        sensitivity=tp_total / gt_total,
        fpavg=fp_total / n,
        fnavg=fn_total / n,
        tp=tp_total,
        fp=fp_total,
        fn=fn_total,
        n_images=n,
        n_gt=gt_total,
    )


def _nearest_rank(sorted_values, numer, denom):
    # rank = ceil(q * B) in exact integer arithmetic, 1-indexed
    rank = -(-len(sorted_values) * numer // denom)
    return float(sorted_values[rank - 1])


@dataclass(frozen=True)
class BootstrapSummary:
    fauc: float
    std: float
    ci_low: float
    ci_high: float
    n_replicates: int


def bootstrap_fauc(records, fp_max, n_replicates=1000, seed=0):
    """Image-level bootstrap of the FROC area.

    Resamples images with replacement; a resample with no ground truth is
    redrawn from the same stream, giving up after a fixed number of tries.
    Replicate sums run in exact integer arithmetic, so each replicate's
    value is independent of image order.
    """
    if n_replicates < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    if not records:
        raise ValueError("need at least one detection record")
    point = fauc(curve_from_records(records), fp_max)
    tp, taken, gt = _rank_tables(records)
    n = len(records)
    k_count = tp.shape[1]
    values = np.empty(n_replicates)
    for b in range(n_replicates):
        rng = np.random.default_rng((seed, _BOOTSTRAP_STREAM, b))
        for _ in range(_MAX_REDRAWS):
            idx = rng.integers(0, n, size=n)
            counts = np.bincount(idx, minlength=n)
            gt_total = int(counts @ gt)
            if gt_total > 0:
                break
        else:
            raise RuntimeError(
                "bootstrap resample still has no ground truth after "
                f"{_MAX_REDRAWS} redraws"
            )
        tp_k = np.einsum("i,ik->k", counts, tp)
        fp_k = np.einsum("i,ik->k", counts, taken) - tp_k
        points = [
            (fp_k[k] / n, tp_k[k] / gt_total) for k in range(k_count)
        ]
        values[b] = fauc(points, fp_max)
    order = np.sort(values)
    return BootstrapSummary(
        fauc=point,
        std=float(np.std(values, ddof=1)),
        ci_low=_nearest_rank(order, 25, 1000),
        ci_high=_nearest_rank(order, 975, 1000),
        n_replicates=n_replicates,
    )


def save_froc_csv(curve, path):
    """Write a curve as CSV with full float precision."""
    lines = ["k,fpavg,sensitivity"]
    for k, fpavg, sens in curve.points:
        lines.append(f"{k},{repr(float(fpavg))},{repr(float(sens))}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_froc_csv(path):
    """Read a curve written by save_froc_csv."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "k,fpavg,sensitivity":
        raise ValueError("not a FROC curve file")
    points = []
    for line in lines[1:]:
        k, fpavg, sens = line.split(",")
        points.append((int(k), float(fpavg), float(sens)))
    return tuple(points)
