"""Dataset synthesis, augmentation, and container formats."""

from .augment import augment, rotate, translate
from .grids import (
    CELL,
    CELLS,
    GRID_COLS,
    GRID_H,
    GRID_ROWS,
    GRID_W,
    ROLE_CODES,
    DatasetSplit,
    GridSample,
    SourceSplit,
    generate_grid_dataset,
    load_dataset,
    load_mnist,
    save_dataset,
)
from .idx import load_idx, save_idx
from .pgm import read_pgm, write_pgm

__all__ = [
    "CELL",
    "CELLS",
    "GRID_COLS",
    "GRID_H",
    "GRID_ROWS",
    "GRID_W",
    "ROLE_CODES",
    "DatasetSplit",
    "GridSample",
    "SourceSplit",
    "augment",
    "generate_grid_dataset",
    "load_dataset",
    "load_idx",
    "load_mnist",
    "read_pgm",
    "rotate",
    "save_dataset",
    "save_idx",
    "translate",
    "write_pgm",
]
