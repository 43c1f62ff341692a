# src/core/terrain.py
"""Procedural off-road worlds stored as 2.5D height fields.

A world is a raster of elevations plus a mask of vertical obstacles (trees,
bushes, pillars) that vehicles never drive through. Cell (r, c) covers
``[origin + c*res, origin + (c+1)*res)`` in x and the same in y for r; features
are evaluated at cell centers.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from src.core.config import coerce, read_key_values
from src.utils.errors import ConfigError, InvalidSpecError
from src.utils.logger import logger
from src.utils.textio import ensure_parent, fmt, require_file

WORLD_MAGIC = "TRAVBENCH-HF v1"
MIN_CELLS = 32


@dataclass
class HeightField:
    """Raster elevation world with an obstacle mask (True = never traversed)."""
    origin: np.ndarray
    resolution: float
    width: int
    height: int
    elevation: np.ndarray
    obstacle_mask: np.ndarray
    obstacle_height: float = 2.0

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        self.elevation = np.asarray(self.elevation, dtype=np.float64)
        self.obstacle_mask = np.asarray(self.obstacle_mask, dtype=bool)
        if self.resolution <= 0:
            raise InvalidSpecError(f"resolution must be > 0, got {self.resolution}")
        if self.elevation.shape != (self.height, self.width):
            raise InvalidSpecError(
                f"elevation shape {self.elevation.shape} does not match dims ({self.height}, {self.width})"
            )
        if self.obstacle_mask.shape != self.elevation.shape:
            raise InvalidSpecError("obstacle_mask must have the same shape as elevation")
        if not np.all(np.isfinite(self.elevation)):
            raise InvalidSpecError("elevation must be finite everywhere")

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        """(x_min, y_min, x_max, y_max) in metres."""
        x0, y0 = self.origin
        return x0, y0, x0 + self.width * self.resolution, y0 + self.height * self.resolution

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each shaped (height, width)."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def cell_of(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map world points (..., 2) to (rows, cols, inside) with the floor convention."""
        xy = np.asarray(xy, dtype=np.float64)
        cols = np.floor((xy[..., 0] - self.origin[0]) / self.resolution).astype(np.int64)
        rows = np.floor((xy[..., 1] - self.origin[1]) / self.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        return rows, cols, inside

    def elevation_at(self, xy: np.ndarray) -> np.ndarray:
        """Cell elevation under each point; NaN outside the world."""
        rows, cols, inside = self.cell_of(xy)
        out = np.full(rows.shape, np.nan)
        out[inside] = self.elevation[rows[inside], cols[inside]]
        return out

    def surface_at(self, xy: np.ndarray) -> np.ndarray:
        """Bilinear ground surface through the cell centers; NaN outside the world."""
        xy = np.asarray(xy, dtype=np.float64)
        fx = (xy[..., 0] - self.origin[0]) / self.resolution - 0.5
        fy = (xy[..., 1] - self.origin[1]) / self.resolution - 0.5
        inside = (fx >= -0.5) & (fx < self.width - 0.5) & (fy >= -0.5) & (fy < self.height - 0.5)
        fx = np.clip(fx, 0.0, self.width - 1.0)
        fy = np.clip(fy, 0.0, self.height - 1.0)
        c0 = np.minimum(np.floor(fx).astype(np.int64), self.width - 2 if self.width > 1 else 0)
        r0 = np.minimum(np.floor(fy).astype(np.int64), self.height - 2 if self.height > 1 else 0)
        tx = fx - c0
        ty = fy - r0
        e = self.elevation
        z = ((1 - tx) * (1 - ty) * e[r0, c0] + tx * (1 - ty) * e[r0, c0 + 1]
             + (1 - tx) * ty * e[r0 + 1, c0] + tx * ty * e[r0 + 1, c0 + 1])
        return np.where(inside, z, np.nan)

    def obstacle_at(self, xy: np.ndarray) -> np.ndarray:
        rows, cols, inside = self.cell_of(xy)
        out = np.zeros(rows.shape, dtype=bool)
        out[inside] = self.obstacle_mask[rows[inside], cols[inside]]
        return out


@dataclass
class TerrainFeature:
    """One explicitly placed feature.

    kind: bump | ridge | pothole | rough | obstacle. ``size`` is the Gaussian sigma
    (bump, ridge along its long axis, pothole) or the radius (rough, obstacle).
    """
    kind: str
    x: float
    y: float
    amplitude: float = 0.0
    size: float = 1.0
    aspect: float = 1.0
    angle: float = 0.0


@dataclass
class TerrainRecipe:
    """Counts and size ranges for random features plus optional explicit ones."""
    width: int = 128
    height: int = 128
    resolution: float = 0.25
    origin: Tuple[float, float] = (0.0, 0.0)
    base_roughness: float = 0.05
    base_smoothing: float = 6.0
    bump_count: int = 8
    bump_amplitude: Tuple[float, float] = (0.15, 0.5)
    bump_sigma: Tuple[float, float] = (0.6, 1.5)
    ridge_count: int = 3
    ridge_aspect: Tuple[float, float] = (3.0, 6.0)
    pothole_count: int = 5
    pothole_depth: Tuple[float, float] = (0.1, 0.3)
    pothole_sigma: Tuple[float, float] = (0.4, 0.9)
    rough_count: int = 4
    rough_radius: Tuple[float, float] = (1.5, 3.0)
    rough_amplitude: Tuple[float, float] = (0.03, 0.08)
    obstacle_count: int = 10
    obstacle_radius: Tuple[float, float] = (0.3, 0.8)
    obstacle_height: float = 2.0
    features: List[TerrainFeature] = field(default_factory=list)

    def validate(self) -> None:
        if self.width < MIN_CELLS or self.height < MIN_CELLS:
            raise InvalidSpecError(
                f"grid dims must be >= {MIN_CELLS}x{MIN_CELLS}, got {self.width}x{self.height}"
            )
        if self.resolution <= 0:
            raise InvalidSpecError(f"resolution must be > 0, got {self.resolution}")
        if self.obstacle_height <= 0:
            raise InvalidSpecError("obstacle_height must be > 0")
        if self.base_roughness < 0 or self.base_smoothing <= 0:
            raise InvalidSpecError("base_roughness must be >= 0 and base_smoothing > 0")
        counts = (self.bump_count, self.ridge_count, self.pothole_count, self.rough_count, self.obstacle_count)
        if any(c < 0 for c in counts):
            raise InvalidSpecError(f"feature counts must be >= 0, got {counts}")
        ranges = {
            'bump_amplitude': self.bump_amplitude, 'bump_sigma': self.bump_sigma,
            'ridge_aspect': self.ridge_aspect, 'pothole_depth': self.pothole_depth,
            'pothole_sigma': self.pothole_sigma, 'rough_radius': self.rough_radius,
            'rough_amplitude': self.rough_amplitude, 'obstacle_radius': self.obstacle_radius,
        }
        for name, (lo, hi) in ranges.items():
            if lo <= 0 or hi < lo:
                raise InvalidSpecError(f"{name} range must be positive and ordered, got ({lo}, {hi})")


def _gaussian(xx, yy, f: TerrainFeature) -> np.ndarray:
    dx = xx - f.x
    dy = yy - f.y
    c, s = np.cos(f.angle), np.sin(f.angle)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    sigma_u = f.size
    sigma_v = f.size / max(f.aspect, 1e-9)
    return np.exp(-0.5 * ((u / sigma_u) ** 2 + (v / sigma_v) ** 2))


def _apply_feature(elev, mask, xx, yy, f: TerrainFeature, rng) -> None:
    if f.kind in ('bump', 'ridge'):
        elev += f.amplitude * _gaussian(xx, yy, f)
    elif f.kind == 'pothole':
        elev -= f.amplitude * _gaussian(xx, yy, f)
    elif f.kind == 'rough':
        inside = (xx - f.x) ** 2 + (yy - f.y) ** 2 <= f.size ** 2
        elev[inside] += f.amplitude * rng.standard_normal(int(inside.sum()))
    elif f.kind == 'obstacle':
        mask |= (xx - f.x) ** 2 + (yy - f.y) ** 2 <= f.size ** 2
    else:
        raise InvalidSpecError(f"Unknown terrain feature kind: {f.kind}")


def _random_features(recipe: TerrainRecipe, rng, extent) -> List[TerrainFeature]:
    x0, y0, x1, y1 = extent
    margin = 2.0

    def place():
        return rng.uniform(x0 + margin, x1 - margin), rng.uniform(y0 + margin, y1 - margin)

    features = []
    for _ in range(recipe.bump_count):
        x, y = place()
        features.append(TerrainFeature('bump', x, y, rng.uniform(*recipe.bump_amplitude),
                                       rng.uniform(*recipe.bump_sigma)))
    for _ in range(recipe.ridge_count):
        x, y = place()
        features.append(TerrainFeature('ridge', x, y, rng.uniform(*recipe.bump_amplitude),
                                       rng.uniform(*recipe.bump_sigma) * 2.0,
                                       aspect=rng.uniform(*recipe.ridge_aspect),
                                       angle=rng.uniform(0.0, np.pi)))
    for _ in range(recipe.pothole_count):
        x, y = place()
        features.append(TerrainFeature('pothole', x, y, rng.uniform(*recipe.pothole_depth),
                                       rng.uniform(*recipe.pothole_sigma)))
    for _ in range(recipe.rough_count):
        x, y = place()
        features.append(TerrainFeature('rough', x, y, rng.uniform(*recipe.rough_amplitude),
                                       rng.uniform(*recipe.rough_radius)))
    for _ in range(recipe.obstacle_count):
        x, y = place()
        features.append(TerrainFeature('obstacle', x, y, size=rng.uniform(*recipe.obstacle_radius)))
    return features


def generate_world(seed: int, recipe: TerrainRecipe) -> HeightField:
    """Generate a deterministic world for ``(seed, recipe)``.

    Base terrain is Gaussian-smoothed white noise scaled to ``base_roughness``
    standard deviation; random features are drawn first, explicit ones applied last.
    """
    recipe.validate()
    rng = np.random.default_rng(seed)
    h, w, res = recipe.height, recipe.width, recipe.resolution
    elevation = np.zeros((h, w), dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)

    if recipe.base_roughness > 0:
        noise = gaussian_filter(rng.standard_normal((h, w)), sigma=recipe.base_smoothing, mode='reflect')
        std = noise.std()
        if std > 0:
            elevation += recipe.base_roughness * (noise - noise.mean()) / std

    world = HeightField(recipe.origin, res, w, h, elevation, mask, recipe.obstacle_height)
    xx, yy = world.cell_centers()
    features = _random_features(recipe, rng, world.extent) + list(recipe.features)
    for f in features:
        _apply_feature(elevation, mask, xx, yy, f, rng)

    logger.debug(f"Generated world {w}x{h} @ {res} m with {len(features)} features "
                 f"({int(mask.sum())} obstacle cells)")
    return HeightField(recipe.origin, res, w, h, elevation, mask, recipe.obstacle_height)


def write_world(path: Union[str, Path], world: HeightField) -> None:
    """Text header, then little-endian float32 elevations, then one byte per mask cell."""
    path = ensure_parent(path)
    header = (f"{WORLD_MAGIC}\n"
              f"{fmt(world.origin[0])} {fmt(world.origin[1])} {fmt(world.resolution)} "
              f"{world.width} {world.height} {fmt(world.obstacle_height)}\n")
    with open(path, 'wb') as f:
        f.write(header.encode('ascii'))
        f.write(world.elevation.astype('<f4').tobytes(order='C'))
        f.write(world.obstacle_mask.astype(np.uint8).tobytes(order='C'))


def read_world(path: Union[str, Path]) -> HeightField:
    path = require_file(path)
    with open(path, 'rb') as f:
        magic = f.readline().decode('ascii').strip()
        if magic != WORLD_MAGIC:
            raise InvalidSpecError(f"{path} is not a world file (magic {magic!r})")
        ox, oy, res, w, h, obs_h = f.readline().decode('ascii').split()
        w, h = int(w), int(h)
        elev = np.frombuffer(f.read(4 * w * h), dtype='<f4').reshape(h, w).astype(np.float64)
        mask = np.frombuffer(f.read(w * h), dtype=np.uint8).reshape(h, w).astype(bool)
    return HeightField((float(ox), float(oy)), float(res), w, h, elev, mask, float(obs_h))


def parse_recipe(path: Union[str, Path]) -> TerrainRecipe:
    """Read a ``key=value`` terrain recipe; ranges are written ``lo,hi``.

    Explicit features use ``feature=kind,x,y,amplitude,size[,aspect,angle]`` and may repeat.
    """
    try:
        entries = read_key_values(path)
    except ConfigError as e:
        raise InvalidSpecError(str(e))
    recipe = TerrainRecipe()
    for lineno, key, value in entries:
        try:
            if key == 'feature':
                parts = [p.strip() for p in value.split(',')]
                recipe.features.append(TerrainFeature(parts[0], *[float(p) for p in parts[1:]]))
            elif hasattr(recipe, key) and not isinstance(getattr(recipe, key), list):
                setattr(recipe, key, coerce(value, getattr(recipe, key), key))
            else:
                raise InvalidSpecError(f"{path}:{lineno}: unknown recipe key {key!r}")
        except InvalidSpecError:
            raise
        except ConfigError as e:
            raise InvalidSpecError(f"{path}:{lineno}: {e}")
        except (TypeError, ValueError):
            raise InvalidSpecError(f"{path}:{lineno}: invalid value for {key!r}: {value!r}")
    return recipe


def flat_recipe(width: int = 64, height: int = 64, resolution: float = 0.25,
                features: Optional[List[TerrainFeature]] = None) -> TerrainRecipe:
    """Recipe with no random features and a perfectly flat base."""
    return TerrainRecipe(width=width, height=height, resolution=resolution, base_roughness=0.0,
                         bump_count=0, ridge_count=0, pothole_count=0, rough_count=0,
                         obstacle_count=0, features=list(features or []))
