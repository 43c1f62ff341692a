# src/core/gridmap.py
"""2.5D grid map built from per-point traversability predictions.

Per cell: max elevation of member points, mean predicted traversability value,
conservative class (any non-traversable member makes the cell non-traversable),
and a known flag. Non-traversable cells carry no value (masked).
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.core.terrain import HeightField
from src.utils.errors import ConfigError
from src.utils.logger import logger
from src.utils.textio import ensure_parent, fmt, require_file

MAP_MAGIC = "TRAVBENCH-MAP v1"
DEFAULT_RESOLUTION = 0.25

UNKNOWN = -1
NON_TRAVERSABLE = 0
TRAVERSABLE = 1


@dataclass
class GridMap2p5:
    origin: np.ndarray
    resolution: float
    width: int
    height: int
    elevation: np.ndarray
    trav_value: np.ndarray
    trav_class: np.ndarray
    known: np.ndarray
    counts: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        if self.resolution <= 0:
            raise ConfigError(f"map resolution must be > 0, got {self.resolution}")

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        x0, y0 = self.origin
        return x0, y0, x0 + self.width * self.resolution, y0 + self.height * self.resolution

    def cell_of(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=np.float64)
        cols = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.int64)
        rows = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        return rows, cols, inside

    def contains(self, xy) -> bool:
        return bool(np.all(self.cell_of(np.asarray(xy, dtype=np.float64))[2]))

    def sample(self, xy: np.ndarray) -> dict:
        """Layers under each point (..., 2); cells outside the map read as unknown."""
        rows, cols, inside = self.cell_of(xy)
        r = np.where(inside, rows, 0)
        c = np.where(inside, cols, 0)
        known = inside & self.known[r, c]
        cls = np.where(known, self.trav_class[r, c], UNKNOWN)
        return {
            'rows': rows, 'cols': cols, 'inside': inside, 'known': known, 'class': cls,
            'elevation': np.where(known, self.elevation[r, c], np.nan),
            'value': np.where(known, self.trav_value[r, c], np.nan),
        }


def build_map(points: np.ndarray, scores: np.ndarray, classes: np.ndarray, trav_pred: np.ndarray,
              origin, resolution: float = DEFAULT_RESOLUTION, dims: Tuple[int, int] = (128, 128)) -> GridMap2p5:
    """Bin points into cells by ``floor((p - origin) / resolution)``.

    ``classes`` is True for traversable points; ``dims`` is (width, height).
    ``scores`` is kept for symmetry with the per-point predictions but only the
    class and regression value enter the map.
    """
    if resolution <= 0:
        raise ConfigError(f"map resolution must be > 0, got {resolution}")
    width, height = int(dims[0]), int(dims[1])
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    classes = np.asarray(classes, dtype=bool).reshape(-1)
    trav_pred = np.asarray(trav_pred, dtype=np.float64).reshape(-1)
    origin = np.asarray(origin, dtype=np.float64).reshape(2)
    cols = np.floor((points[:, 0] - origin[0]) / resolution).astype(np.int64)
    rows = np.floor((points[:, 1] - origin[1]) / resolution).astype(np.int64)
    inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    dropped = int((~inside).sum())
    if dropped:
        logger.warning(f"build_map: dropped {dropped} out-of-bounds points")

    flat = rows[inside] * width + cols[inside]
    n_cells = width * height
    counts = np.bincount(flat, minlength=n_cells)
    elevation = np.full(n_cells, -np.inf)
    np.maximum.at(elevation, flat, points[inside, 2])
    value_sum = np.bincount(flat, weights=trav_pred[inside], minlength=n_cells)
    blocked = np.bincount(flat, weights=(~classes[inside]).astype(np.float64), minlength=n_cells) > 0

    known = counts > 0
    trav_class = np.full(n_cells, UNKNOWN, dtype=np.int8)
    trav_class[known] = TRAVERSABLE
    trav_class[known & blocked] = NON_TRAVERSABLE
    trav_value = np.full(n_cells, np.nan)
    keep = known & ~blocked
    trav_value[keep] = value_sum[keep] / counts[keep]
    elevation[~known] = np.nan

    shape = (height, width)
    return GridMap2p5(origin, float(resolution), width, height, elevation.reshape(shape),
                      trav_value.reshape(shape), trav_class.reshape(shape), known.reshape(shape),
                      counts.reshape(shape), dropped)


def map_from_world(world: HeightField, value_layer: Optional[np.ndarray] = None,
                   blocked: Optional[np.ndarray] = None) -> GridMap2p5:
    """Fully known map aligned with ``world`` (oracle planner maps).

    Obstacle cells (or ``blocked`` if given) are non-traversable; the rest take
    ``value_layer`` (zeros by default).
    """
    shape = world.elevation.shape
    blocked = world.obstacle_mask if blocked is None else np.asarray(blocked, dtype=bool)
    values = np.zeros(shape) if value_layer is None else np.clip(np.asarray(value_layer, dtype=np.float64), 0.0, 1.0)
    trav_class = np.where(blocked, NON_TRAVERSABLE, TRAVERSABLE).astype(np.int8)
    return GridMap2p5(world.origin.copy(), world.resolution, world.width, world.height,
                      world.elevation.copy(), np.where(blocked, np.nan, values), trav_class,
                      np.ones(shape, dtype=bool), np.ones(shape, dtype=np.int64), 0)


def write_map(path: Union[str, Path], grid: GridMap2p5) -> None:
    """World-file layout plus per-cell layers: elevation, value (float32), class (int8), known, counts (uint32)."""
    path = ensure_parent(path)
    header = (f"{MAP_MAGIC}\n"
              f"{fmt(grid.origin[0])} {fmt(grid.origin[1])} {fmt(grid.resolution)} "
              f"{grid.width} {grid.height} {grid.dropped}\n")
    with open(path, 'wb') as f:
        f.write(header.encode('ascii'))
        f.write(grid.elevation.astype('<f4').tobytes(order='C'))
        f.write(grid.trav_value.astype('<f4').tobytes(order='C'))
        f.write(grid.trav_class.astype(np.int8).tobytes(order='C'))
        f.write(grid.known.astype(np.uint8).tobytes(order='C'))
        f.write(grid.counts.astype('<u4').tobytes(order='C'))


def read_map(path: Union[str, Path]) -> GridMap2p5:
    path = require_file(path)
    with open(path, 'rb') as f:
        magic = f.readline().decode('ascii').strip()
        if magic != MAP_MAGIC:
            raise ConfigError(f"{path} is not a grid map file (magic {magic!r})")
        ox, oy, res, w, h, dropped = f.readline().decode('ascii').split()
        w, h = int(w), int(h)
        n = w * h
        elevation = np.frombuffer(f.read(4 * n), dtype='<f4').reshape(h, w).astype(np.float64)
        value = np.frombuffer(f.read(4 * n), dtype='<f4').reshape(h, w).astype(np.float64)
        cls = np.frombuffer(f.read(n), dtype=np.int8).reshape(h, w).copy()
        known = np.frombuffer(f.read(n), dtype=np.uint8).reshape(h, w).astype(bool)
        counts = np.frombuffer(f.read(4 * n), dtype='<u4').reshape(h, w).astype(np.int64)
    return GridMap2p5((float(ox), float(oy)), float(res), w, h, elevation, value, cls, known, counts, int(dropped))
