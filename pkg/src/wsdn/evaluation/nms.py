"""Peak extraction from score maps by non-maximum suppression.

A pixel survives iff its value is positive, equals the maximum over the
6x6 window spanning offsets -3..+2 around it in each axis (clipped at the
borders), and no earlier pixel in row-major order inside that window holds
an equal value. The last rule keeps exactly one representative per flat
plateau. Candidates come back sorted by score descending, ties broken by
row-major position.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

WINDOW_LO = -3
WINDOW_HI = 2

# offsets (dy, dx) inside the window that precede the center in row-major
# order; an equal value at any of them suppresses the center pixel
_EARLIER = [
    (dy, dx)
    for dy in range(WINDOW_LO, WINDOW_HI + 1)
    for dx in range(WINDOW_LO, WINDOW_HI + 1)
    if dy < 0 or (dy == 0 and dx < 0)
]


@dataclass(frozen=True)
class Candidate:
    row: int
    col: int
    score: float


def non_max_suppression(score_map):
    """Extract ranked peak candidates from a non-negative 2D score field."""
    field = getattr(score_map, "scores", score_map)
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError("non-maximum suppression expects a 2D score map")
    if field.size == 0:
        return []

    # the maximum filter realizes the -3..+2 window: for even sizes scipy
    # places size//2 taps to the left of the center and size//2 - 1 right
    window_max = ndimage.maximum_filter(field, size=6, mode="constant", cval=-np.inf)
    keep = (field > 0.0) & (field == window_max)

    H, W = field.shape
    for dy, dx in _EARLIER:
        ys = slice(max(dy, 0), H + min(dy, 0))
        xs = slice(max(dx, 0), W + min(dx, 0))
        ys_nb = slice(max(-dy, 0), H + min(-dy, 0))
        xs_nb = slice(max(-dx, 0), W + min(-dx, 0))
        equal_earlier = field[ys_nb, xs_nb] == field[ys, xs]
        keep[ys_nb, xs_nb] &= ~equal_earlier

    rows, cols = np.nonzero(keep)
    candidates = [
        Candidate(int(y), int(x), float(field[y, x])) for y, x in zip(rows, cols)
    ]
    candidates.sort(key=lambda c: (-c.score, c.row, c.col))
    return candidates
