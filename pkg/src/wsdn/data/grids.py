"""Digit-grid counting datasets.

Each sample is a 5-row by 7-column grid of 28x28 digit images (140x196
pixels), labeled with the number of cells showing a chosen target digit,
plus dot/box ground truth for detection scoring. Splits are balanced so
exactly half the samples contain no target digit at all.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np

from .idx import load_idx, save_idx

CELL = 28
GRID_ROWS = 5
GRID_COLS = 7
GRID_H = GRID_ROWS * CELL
GRID_W = GRID_COLS * CELL
CELLS = GRID_ROWS * GRID_COLS

ROLE_CODES = {"train": 0, "val": 1, "test": 2}

DEFAULT_MNIST_DIR = "/root/data/mnist"

GT_COLUMNS = ("image_index", "count", "dot_row", "dot_col", "box_row0", "box_col0")

# rejection sampling terminates with probability 1 on any valid pool; the cap
# only turns a degenerate pool that slipped past validation into a loud error
_MAX_REDRAWS = 100_000


@dataclass(frozen=True)
class SourceSplit:
    """A labeled pool of 28x28 digit images that grid cells draw from."""

    images: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.images.ndim != 3 or self.images.shape[1:] != (CELL, CELL):
            raise ValueError("source images must be (n, 28, 28)")
        if self.labels.shape != (self.images.shape[0],):
            raise ValueError("labels must pair one-to-one with images")

    def __len__(self):
        return self.images.shape[0]


def _find_idx_file(root, name):
    for candidate in (os.path.join(root, name), os.path.join(root, name + ".gz")):
        if os.path.exists(candidate):
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found under {root}")


def load_mnist(split="train", root=None):
    """Load the train or test source split from IDX files.

    The directory defaults to $WSDN_MNIST_DIR, falling back to
    /root/data/mnist. Files may be plain or gzipped.
    """
    if split not in ("train", "test"):
        raise ValueError(f"unknown source split {split!r}")
    root = root or os.environ.get("WSDN_MNIST_DIR", DEFAULT_MNIST_DIR)
    stem = "train" if split == "train" else "t10k"
    images = load_idx(_find_idx_file(root, f"{stem}-images-idx3-ubyte"))
    labels = load_idx(_find_idx_file(root, f"{stem}-labels-idx1-ubyte"))
    if labels.shape[0] != images.shape[0]:
        raise ValueError("image/label count mismatch in source split")
    return SourceSplit(images=images, labels=labels)


@dataclass(frozen=True)
class GridSample:
    """One grid image with its count label and detection ground truth."""

    image: np.ndarray
    count: int
    gt_dots: tuple
    gt_boxes: tuple

    @property
    def presence(self):
        return self.count >= 1


@dataclass(frozen=True)
class DatasetSplit:
    samples: tuple
    role: str
    target_digit: int
    seed: int


def _sample_cells(source, target_digit, rng, want_zero):
    # redraw whole grids until the requested stratum is hit, keeping the
    # per-cell distribution uniform over the pool
    for _ in range(_MAX_REDRAWS):
        cells = rng.integers(0, len(source), size=CELLS)
        count = int(np.count_nonzero(source.labels[cells] == target_digit))
        if (count == 0) == want_zero:
            return cells, count
    raise RuntimeError("rejection sampling failed to fill a count stratum")


def generate_grid_dataset(source, target_digit, n, seed, role="train", start=0):
    """Synthesize n grid samples, exactly half with zero target count.

    Even sample indices take the zero-count stratum and odd indices the
    positive one. Every image draws from its own substream keyed
    (seed, role code, index), so generating indices [start, start+n) in
    pieces or in parallel reproduces the sequential output bitwise.
    """
    if role not in ROLE_CODES:
        raise ValueError(f"unknown role {role!r}")
    if n < 0 or n % 2 != 0:
        raise ValueError("n must be even to balance the count strata")
    if start < 0 or start % 2 != 0:
        raise ValueError("start must be even to preserve the stratum pattern")
    if not 0 <= target_digit <= 9:
        raise ValueError("target digit must be in 0..9")
    if n > 0:
        if len(source) == 0:
            raise ValueError("source split is empty")
        n_target = int(np.count_nonzero(source.labels == target_digit))
        if n_target == 0:
            raise ValueError("source split holds no target-digit images")
        if n_target == len(source):
            raise ValueError("source split holds only target-digit images")

    role_code = ROLE_CODES[role]
    scaled = source.images / 255.0
    samples = []
    for index in range(start, start + n):
        rng = np.random.default_rng((seed, role_code, index))
        cells, count = _sample_cells(source, target_digit, rng, index % 2 == 0)
        image = np.empty((GRID_H, GRID_W), dtype=np.float64)
        dots, boxes = [], []
        for k, cell_index in enumerate(cells):
            r, c = divmod(k, GRID_COLS)
            y0, x0 = r * CELL, c * CELL
            image[y0 : y0 + CELL, x0 : x0 + CELL] = scaled[cell_index]
            if source.labels[cell_index] == target_digit:
                dots.append((y0 + CELL // 2, x0 + CELL // 2))
                boxes.append((y0, x0))
        samples.append(
            GridSample(image=image, count=count, gt_dots=tuple(dots), gt_boxes=tuple(boxes))
        )
    return DatasetSplit(samples=tuple(samples), role=role, target_digit=target_digit, seed=seed)


def save_dataset(split, images_path, csv_path):
    """Write a split as an IDX image stack plus a ground-truth CSV.

    Intensities go out as round(value*255); zero-count images emit a single
    CSV row with empty dot/box fields.
    """
    if split.samples:
        stack = np.stack([np.rint(s.image * 255.0) for s in split.samples])
        stack = stack.astype(np.uint8)
    else:
        stack = np.zeros((0, GRID_H, GRID_W), dtype=np.uint8)
    save_idx(images_path, stack)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GT_COLUMNS)
        for i, s in enumerate(split.samples):
            if s.count == 0:
                writer.writerow([i, 0, "", "", "", ""])
            else:
                for (dr, dc), (br, bc) in zip(s.gt_dots, s.gt_boxes):
                    writer.writerow([i, s.count, dr, dc, br, bc])


def load_dataset(images_path, csv_path, role="train", target_digit=0, seed=0):
    """Read a split back from its IDX + CSV container and validate it."""
    images = load_idx(images_path)
    if images.ndim != 3 or images.shape[1:] != (GRID_H, GRID_W):
        raise ValueError(f"dataset images must be (n, {GRID_H}, {GRID_W})")
    rows_by_image = {}
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != GT_COLUMNS:
            raise ValueError("ground-truth CSV has the wrong columns")
        for row in reader:
            rows_by_image.setdefault(int(row["image_index"]), []).append(row)
    samples = []
    for i in range(images.shape[0]):
        rows = rows_by_image.get(i)
        if not rows:
            raise ValueError(f"image {i} missing from the ground-truth CSV")
        count = int(rows[0]["count"])
        if count == 0:
            if len(rows) != 1 or any(rows[0][c] for c in GT_COLUMNS[2:]):
                raise ValueError(f"image {i}: a zero count takes one empty row")
            dots, boxes = (), ()
        else:
            if len(rows) != count:
                raise ValueError(f"image {i}: {len(rows)} rows for count {count}")
            dots = tuple((int(r["dot_row"]), int(r["dot_col"])) for r in rows)
            boxes = tuple((int(r["box_row0"]), int(r["box_col0"])) for r in rows)
        samples.append(
            GridSample(image=images[i] / 255.0, count=count, gt_dots=dots, gt_boxes=boxes)
        )
    return DatasetSplit(samples=tuple(samples), role=role, target_digit=target_digit, seed=seed)
