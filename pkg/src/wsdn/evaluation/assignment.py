"""Minimum-cost one-to-one assignment and detection matching.

The solver is a shortest-augmenting-path assignment (potentials form) with
a deterministic lexicographic refinement: among all assignments of equal
minimum total cost, the returned pair list, sorted ascending, is the
lexicographically smallest. Equality of totals is decided in exact rational
arithmetic so the refinement never hinges on float summation order.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

# pairs violating the match criterion cost this much; it dwarfs any sum of
# real pixel distances, so optima always maximize the number of real pairs
SENTINEL = 1e6


def _solve(cost):
    """Optimal columns for an n x m (n <= m) float cost matrix.

    Returns an int array col_of_row. Rows and columns are 1-indexed
    internally with a virtual column 0 used to seed each augmentation.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    row_of_col = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        row_of_col[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        way = np.zeros(m + 1, dtype=np.int64)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of_col[j0]
            free = ~used
            free[0] = False
            js = np.nonzero(free)[0]
            cur = cost[i0 - 1, js - 1] - u[i0] - v[js]
            better = cur < minv[js]
            minv[js] = np.where(better, cur, minv[js])
            way[js[better]] = j0
            j1 = js[np.argmin(minv[js])]
            delta = minv[j1]
            u[row_of_col[used]] += delta
            v[used] -= delta
            minv[js] -= delta
            j0 = j1
            if row_of_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of_col[j0] = row_of_col[j1]
            j0 = j1
    col_of_row = np.zeros(n, dtype=np.int64)
    for j in range(1, m + 1):
        if row_of_col[j]:
            col_of_row[row_of_col[j] - 1] = j - 1
    return col_of_row


def _optimal_pairs(cost):
    """One optimal assignment as a row-sorted pair list."""
    n, m = cost.shape
    if n <= m:
        cols = _solve(cost)
        return [(i, int(cols[i])) for i in range(n)]
    rows = _solve(np.ascontiguousarray(cost.T))
    return sorted((int(rows[j]), j) for j in range(m))


def _exact_total(cost, pairs):
    return sum((Fraction(float(cost[i, j])) for i, j in pairs), Fraction(0))


def _sub_pairs(cost, rows, cols):
    """Optimal pairs over a row/column subset, in original indices."""
    if not rows or not cols:
        return []
    sub = cost[np.ix_(rows, cols)]
    return [(rows[i], cols[j]) for i, j in _optimal_pairs(sub)]


def hungarian_assign(cost):
    """Minimum-total-cost one-to-one assignment of an n x m matrix.

    Returns min(n, m) (row, col) pairs sorted ascending; among equal-cost
    optima the lexicographically smallest sorted pair list wins.
    """
    arr = np.asarray(cost, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("cost must be a 2D matrix")
    n, m = arr.shape
    if n == 0 or m == 0:
        return []
    if not np.isfinite(arr).all():
        raise ValueError("cost matrix entries must be finite")

    best = _optimal_pairs(arr)
    budget = _exact_total(arr, best)
    size = min(n, m)

    # refine slot by slot: force the smallest feasible (row, col) that still
    # completes to the exact optimal total
    result = []
    rows_left = list(range(n))
    cols_left = list(range(m))
    for slot in range(size):
        incumbent = best[slot]
        chosen = None
        remaining = size - slot - 1
        for i in rows_left:
            if (i, min(cols_left)) >= incumbent:
                break
            later_rows = [r for r in rows_left if r > i]
            if len(later_rows) < remaining:
                continue
            for j in cols_left:
                if (i, j) >= incumbent:
                    break
                completion = _sub_pairs(arr, later_rows, [c for c in cols_left if c != j])
                total = Fraction(float(arr[i, j])) + _exact_total(arr, completion)
                if sum((Fraction(float(arr[r, c])) for r, c in result), total) == budget:
                    chosen = (i, j)
                    best = result + [(i, j)] + completion
                    break
            if chosen:
                break
        pair = chosen if chosen else incumbent
        result.append(pair)
        rows_left = [r for r in rows_left if r > pair[0]]
        cols_left = [c for c in cols_left if c != pair[1]]
    return result


@dataclass(frozen=True)
class MatchOutcome:
    """One-to-one detection match: tp holds (candidate index, dot index)
    pairs, fp unmatched candidate indices, fn unmatched dot indices."""

    tp: tuple
    fp: tuple
    fn: tuple


def _pair_cost(candidate, dot, box, criterion, radius):
    dy = candidate.row - dot[0]
    dx = candidate.col - dot[1]
    dist = float(np.hypot(dy, dx))
    if criterion == "box":
        r0, c0 = box
        inside = r0 <= candidate.row <= r0 + 27 and c0 <= candidate.col <= c0 + 27
        return dist if inside else SENTINEL
    if criterion == "radius":
        return dist if dist <= radius else SENTINEL
    raise ValueError(f"unknown match criterion {criterion!r}")


def match_detections(candidates, sample, criterion="box", radius=6.0):
    """Match ranked candidates one-to-one against a sample's ground truth.

    Pairs outside the criterion (the dot's 28x28 cell box, or a distance
    cap) carry the sentinel cost; sentinel-matched pairs count as missed
    on both sides.
    """
    dots = sample.gt_dots
    boxes = sample.gt_boxes
    if not candidates or not dots:
        return MatchOutcome(
            tp=(), fp=tuple(range(len(candidates))), fn=tuple(range(len(dots)))
        )
    cost = np.empty((len(candidates), len(dots)))
    for a, cand in enumerate(candidates):
        for b, (dot, box) in enumerate(zip(dots, boxes)):
            cost[a, b] = _pair_cost(cand, dot, box, criterion, radius)
    pairs = hungarian_assign(cost)
    tp = tuple((a, b) for a, b in pairs if cost[a, b] < SENTINEL)
    matched_a = {a for a, _ in tp}
    matched_b = {b for _, b in tp}
    fp = tuple(a for a in range(len(candidates)) if a not in matched_a)
    fn = tuple(b for b in range(len(dots)) if b not in matched_b)
    return MatchOutcome(tp=tp, fp=fp, fn=fn)
