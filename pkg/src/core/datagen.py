# src/core/datagen.py
"""Self-supervised dataset generation.

Proprioception recorded in a SimTrace is projected onto LiDAR points near the
wheel contacts (positives); the rest of the cloud supplies unlabeled samples.
Every sample carries the k-nearest-neighbour patch around its query point.
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import binary_dilation, maximum_filter, minimum_filter
from scipy.spatial import cKDTree

from src.core.lidar import LidarScan
from src.core.terrain import HeightField
from src.core.vehicle_sim import SimTrace
from src.utils.errors import ConfigError
from src.utils.logger import logger
from src.utils.textio import ensure_parent, fmt, require_file

DEFAULT_RADIUS = 0.25
TRAIN_FRACTION = 0.8

SEMANTIC_POSITIVE = ('grass', 'mud')
SEMANTIC_NEGATIVE = ('tree', 'vehicle', 'object', 'person', 'fence', 'barrier', 'bush')


class LabelKind(str, Enum):
    POSITIVE = 'positive'
    UNLABELED = 'unlabeled'
    NEGATIVE = 'negative-eval-only'


class ValueMode(str, Enum):
    WHEEL_FORCE = 'wheel_force'
    Z_ACCEL = 'z_accel'


@dataclass
class TraversalSample:
    query_point: np.ndarray
    patch: np.ndarray
    label_kind: LabelKind
    trav_value: Optional[float] = None

    @property
    def is_positive(self) -> bool:
        return self.label_kind == LabelKind.POSITIVE


@dataclass
class DatasetSplit:
    train: List[TraversalSample]
    eval: List[TraversalSample]
    split_seed: int


@dataclass
class AugmentSpec:
    yaw_range: Tuple[float, float] = (-np.pi, np.pi)
    scale_range: Tuple[float, float] = (0.9, 1.1)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.scale_range
        if lo <= 0 or hi < lo:
            raise ConfigError(f"scale_range must lie in (0, inf) and be ordered, got {self.scale_range}")
        if self.yaw_range[1] < self.yaw_range[0]:
            raise ConfigError(f"yaw_range must be ordered, got {self.yaw_range}")


@dataclass
class DatasetMeta:
    """Header persisted with a dataset file."""
    k: int
    value_mode: Optional[str] = None
    normalization: Optional[Tuple[float, float]] = None
    seeds: Dict[str, int] = field(default_factory=dict)


# ---------------------------------------------------------------- projection

def raw_trace_values(trace: SimTrace, value_mode: ValueMode) -> np.ndarray:
    """Per-contact ground-truth values (T, W) before normalization.

    wheel_force uses each wheel's load as a fraction of the vehicle's impact
    tolerance; z_accel repeats |a_z| of the timestep for every wheel.
    """
    value_mode = ValueMode(value_mode)
    if value_mode == ValueMode.WHEEL_FORCE:
        return trace.wheel_forces / trace.impact_tolerance
    return np.repeat(np.abs(trace.z_accel)[:, None], trace.n_wheels, axis=1)


def trace_value_range(traces: Iterable[SimTrace], value_mode: ValueMode) -> Tuple[float, float]:
    """(min, max) of the raw values over one or several traces (a fleet-wide scale)."""
    values = np.concatenate([raw_trace_values(t, value_mode).ravel() for t in traces])
    return float(values.min()), float(values.max())


def normalize_values(raw: np.ndarray, value_range: Tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    if hi <= lo:
        return np.zeros_like(raw, dtype=np.float64)
    return np.clip((raw - lo) / (hi - lo), 0.0, 1.0)


def voxel_downsample(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Keep the first point seen in every voxel, preserving input order."""
    if voxel_size <= 0 or len(points) == 0:
        return points
    keys = np.floor(points / voxel_size).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def downsample_scan(scan: LidarScan, voxel_size: float) -> LidarScan:
    return LidarScan(scan.pose, voxel_downsample(scan.points, voxel_size), scan.channels)


def fuse_scans(scans: Sequence[LidarScan], voxel_size: float = 0.0) -> np.ndarray:
    """Concatenate scan points, optionally voxel down-sampling the fused cloud."""
    clouds = [s.points for s in scans if len(s.points)]
    if not clouds:
        return np.zeros((0, 3))
    return voxel_downsample(np.concatenate(clouds, axis=0), voxel_size)


def project_contacts(trace: SimTrace, scans: Sequence[LidarScan], radius: float = DEFAULT_RADIUS,
                     value_mode: ValueMode = ValueMode.WHEEL_FORCE,
                     value_range: Optional[Tuple[float, float]] = None) -> List[TraversalSample]:
    """Scan points within ``radius`` of a wheel contact become positives.

    Values are min-max normalized with ``value_range`` (defaults to the trace's own
    range). A point near several contacts keeps the largest value. Patches are
    attached later by :func:`build_pu_dataset`.
    """
    if radius <= 0:
        raise ConfigError(f"radius must be > 0, got {radius}")
    if not scans:
        raise ConfigError("project_contacts needs at least one scan")
    cloud = fuse_scans(scans)
    raw = raw_trace_values(trace, value_mode)
    value_range = value_range or trace_value_range([trace], value_mode)
    values = normalize_values(raw, value_range).ravel()
    contacts = trace.contacts.reshape(-1, 3)
    if len(cloud) == 0:
        logger.warning("project_contacts: scans contain no points")
        return []

    tree = cKDTree(cloud)
    best = np.full(len(cloud), -1.0)
    for ci, neighbours in enumerate(tree.query_ball_point(contacts, r=radius)):
        if neighbours:
            idx = np.asarray(neighbours, dtype=np.int64)
            best[idx] = np.maximum(best[idx], values[ci])

    hit = np.flatnonzero(best >= 0.0)
    if len(hit) == 0:
        logger.warning(f"project_contacts: no scan point within {radius} m of any contact ({trace.vehicle})")
        return []
    logger.debug(f"Projected {len(contacts)} contacts onto {len(hit)} points for {trace.vehicle}")
    return [TraversalSample(cloud[i].copy(), np.zeros((0, 3)), LabelKind.POSITIVE, float(best[i])) for i in hit]


# ---------------------------------------------------------------- patches

def knn_patches(cloud: np.ndarray, queries: np.ndarray, k: int, tree: Optional[cKDTree] = None) -> np.ndarray:
    """k nearest cloud points of every query, relative to the query, shape (n, k, 3).

    The query itself (distance 0) is excluded; ties are broken by point index and
    short neighbourhoods are padded by repeating the nearest neighbour.
    """
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    n = len(queries)
    if len(cloud) == 0 or n == 0:
        return np.zeros((n, k, 3))
    tree = tree or cKDTree(cloud)
    n_cand = min(len(cloud), k + 9)
    _, cand = tree.query(queries, k=n_cand)
    cand = np.asarray(cand, dtype=np.int64).reshape(n, n_cand)
    rel = cloud[cand] - queries[:, None, :]
    dist = np.sqrt((rel ** 2).sum(axis=-1))
    key = np.where(dist > 0.0, dist, np.inf)
    order = np.lexsort((cand, key), axis=-1)
    rel = np.take_along_axis(rel, order[..., None], axis=1)
    valid = np.isfinite(np.take_along_axis(key, order, axis=1))
    if n_cand < k:
        rel = np.concatenate([rel, np.zeros((n, k - n_cand, 3))], axis=1)
        valid = np.concatenate([valid, np.zeros((n, k - n_cand), dtype=bool)], axis=1)
    rel, valid = rel[:, :k], valid[:, :k]
    patches = np.where(valid[..., None], rel, rel[:, :1])
    patches[~valid[:, 0]] = 0.0
    return patches


def attach_patches(samples: Sequence[TraversalSample], cloud: np.ndarray, k: int) -> List[TraversalSample]:
    if not samples:
        return []
    queries = np.stack([s.query_point for s in samples])
    patches = knn_patches(cloud, queries, k)
    return [TraversalSample(s.query_point, patches[i], s.label_kind, s.trav_value) for i, s in enumerate(samples)]


def build_pu_dataset(scans: Sequence[LidarScan], positives: Sequence[TraversalSample], k: int,
                     unlabeled_per_scan: int, seed: int) -> List[TraversalSample]:
    """Keep every positive and draw unlabeled samples uniformly from non-positive points of each scan.

    Patches come from the fused cloud of all scans so positive and unlabeled
    samples see the same point density.
    """
    if k < 4:
        raise ConfigError(f"k must be >= 4, got {k}")
    rng = np.random.default_rng(seed)
    cloud = fuse_scans(scans)
    if positives:
        pos_tree = cKDTree(np.stack([p.query_point for p in positives]))
    else:
        pos_tree = None

    unlabeled: List[TraversalSample] = []
    for si, scan in enumerate(scans):
        if len(scan.points) < 1:
            logger.warning(f"build_pu_dataset: scan {si} has no points, skipped")
            continue
        pts = scan.points
        if pos_tree is not None:
            dist, _ = pos_tree.query(pts, k=1)
            pts = pts[dist > 1e-9]
        take = min(unlabeled_per_scan, len(pts))
        if take <= 0:
            continue
        chosen = rng.choice(len(pts), size=take, replace=False)
        unlabeled.extend(TraversalSample(pts[i].copy(), np.zeros((0, 3)), LabelKind.UNLABELED) for i in np.sort(chosen))

    samples = attach_patches(list(positives), cloud, k) + attach_patches(unlabeled, cloud, k)
    logger.info(f"Built PU dataset: {len(positives)} positives, {len(unlabeled)} unlabeled, k={k}")
    return samples


# ---------------------------------------------------------------- evaluation labels

def label_eval_points(world: HeightField, cloud: np.ndarray, k: int, clearance: float = 0.15,
                      margin_cells: int = 2, max_relief: float = 0.1, max_per_class: Optional[int] = None,
                      seed: int = 0) -> List[TraversalSample]:
    """Label obvious traversable and obvious obstacle points from world geometry.

    Negatives are points on obstacle columns at least ``clearance`` above the ground;
    positives are ground points at least ``margin_cells`` away from any obstacle
    whose local relief is at most ``max_relief``. Everything else is not returned.
    """
    rows, cols, inside = world.cell_of(cloud[:, :2])
    idx = np.flatnonzero(inside)
    rows, cols = rows[idx], cols[idx]
    pts = cloud[idx]
    ground = world.surface_at(pts[:, :2])
    on_obstacle = world.obstacle_mask[rows, cols]
    near_obstacle = binary_dilation(world.obstacle_mask, iterations=max(margin_cells, 1))[rows, cols]
    relief = (maximum_filter(world.elevation, size=5) - minimum_filter(world.elevation, size=5))[rows, cols]

    neg_idx = idx[on_obstacle & (pts[:, 2] >= ground + clearance)]
    pos_idx = idx[~near_obstacle & (np.abs(pts[:, 2] - ground) <= clearance) & (relief <= max_relief)]
    rng = np.random.default_rng(seed)
    if max_per_class is not None:
        if len(neg_idx) > max_per_class:
            neg_idx = np.sort(rng.choice(neg_idx, size=max_per_class, replace=False))
        if len(pos_idx) > max_per_class:
            pos_idx = np.sort(rng.choice(pos_idx, size=max_per_class, replace=False))
    samples = ([TraversalSample(cloud[i].copy(), np.zeros((0, 3)), LabelKind.POSITIVE) for i in pos_idx]
               + [TraversalSample(cloud[i].copy(), np.zeros((0, 3)), LabelKind.NEGATIVE) for i in neg_idx])
    return attach_patches(samples, cloud, k)


def balance_labels(samples: Sequence[TraversalSample], seed: int) -> List[TraversalSample]:
    """Subsample so positives and negatives appear in equal numbers; unlabeled samples are dropped."""
    pos = [s for s in samples if s.label_kind == LabelKind.POSITIVE]
    neg = [s for s in samples if s.label_kind == LabelKind.NEGATIVE]
    n = min(len(pos), len(neg))
    rng = np.random.default_rng(seed)
    pick_pos = np.sort(rng.choice(len(pos), size=n, replace=False)) if n else []
    pick_neg = np.sort(rng.choice(len(neg), size=n, replace=False)) if n else []
    return [pos[i] for i in pick_pos] + [neg[i] for i in pick_neg]


# ---------------------------------------------------------------- split / augment

def split_dataset(samples: Sequence[TraversalSample], split_seed: int) -> DatasetSplit:
    """Shuffled split of the trainable samples, floor(0.8 n) of them to train.

    Eval-only negatives are excluded from n and always land in the eval side.
    """
    samples = list(samples)
    if len(samples) < 5:
        raise ConfigError(f"split_dataset needs at least 5 samples, got {len(samples)}")
    trainable = [s for s in samples if s.label_kind != LabelKind.NEGATIVE]
    negatives = [s for s in samples if s.label_kind == LabelKind.NEGATIVE]
    order = np.random.default_rng(split_seed).permutation(len(trainable))
    n_train = int(np.floor(TRAIN_FRACTION * len(trainable)))
    shuffled = [trainable[i] for i in order]
    return DatasetSplit(shuffled[:n_train], shuffled[n_train:] + negatives, split_seed)


def _rotation_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def augment(sample: TraversalSample, spec: AugmentSpec, draw_seed: int) -> TraversalSample:
    """Rotate the patch about z and scale it; labels and values are untouched."""
    rng = np.random.default_rng(draw_seed)
    yaw = rng.uniform(*spec.yaw_range)
    scale = rng.uniform(*spec.scale_range)
    patch = (sample.patch @ _rotation_z(yaw).T) * scale
    return TraversalSample(sample.query_point, patch, sample.label_kind, sample.trav_value)


def augment_batch(patches: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """Independent rotation/scale draw for every patch in a (B, k, 3) batch."""
    n = len(patches)
    yaw = rng.uniform(spec.yaw_range[0], spec.yaw_range[1], size=n)
    scale = rng.uniform(spec.scale_range[0], spec.scale_range[1], size=n)
    c, s = np.cos(yaw), np.sin(yaw)
    out = np.empty_like(patches)
    out[..., 0] = (c[:, None] * patches[..., 0] - s[:, None] * patches[..., 1]) * scale[:, None]
    out[..., 1] = (s[:, None] * patches[..., 0] + c[:, None] * patches[..., 1]) * scale[:, None]
    out[..., 2] = patches[..., 2] * scale[:, None]
    return out


# ---------------------------------------------------------------- semantic clouds

def ingest_semantic_cloud(points: np.ndarray, class_names: Sequence[str], positive_classes: Iterable[str],
                          negative_classes: Iterable[str], k: int) -> List[TraversalSample]:
    """Map an annotated cloud to positives (classification only) and eval-only negatives."""
    positive_classes, negative_classes = set(positive_classes), set(negative_classes)
    overlap = positive_classes & negative_classes
    if overlap:
        raise ConfigError(f"classes listed as both positive and negative: {sorted(overlap)}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    samples = []
    for p, name in zip(points, class_names):
        if name in positive_classes:
            samples.append(TraversalSample(p.copy(), np.zeros((0, 3)), LabelKind.POSITIVE))
        elif name in negative_classes:
            samples.append(TraversalSample(p.copy(), np.zeros((0, 3)), LabelKind.NEGATIVE))
    dropped = len(points) - len(samples)
    logger.info(f"Ingested semantic cloud: {len(samples)} labeled points, {dropped} dropped")
    return attach_patches(samples, points, k)


def read_semantic_cloud(path: Union[str, Path]) -> Tuple[np.ndarray, List[str]]:
    """Parse ``x y z class_name`` lines."""
    path = require_file(path)
    pts, names = [], []
    for lineno, raw in enumerate(open(path, 'r'), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ConfigError(f"{path}:{lineno}: expected 'x y z class_name'")
        pts.append([float(v) for v in parts[:3]])
        names.append(parts[3])
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3), names


# ---------------------------------------------------------------- dataset files

def write_dataset(path: Union[str, Path], samples: Sequence[TraversalSample], meta: DatasetMeta) -> None:
    """JSON header line, then ``label_kind trav_value qx qy qz p1x p1y p1z ...`` per sample."""
    path = ensure_parent(path)
    header = {'k': meta.k, 'value_mode': meta.value_mode,
              'normalization': None if meta.normalization is None else [float(v) for v in meta.normalization],
              'seeds': meta.seeds}
    with open(path, 'w', newline='\n') as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for s in samples:
            value = '-' if s.trav_value is None else fmt(s.trav_value)
            coords = " ".join(fmt(v) for v in np.concatenate([s.query_point, s.patch.ravel()]))
            f.write(f"{s.label_kind.value} {value} {coords}\n")


def read_dataset(path: Union[str, Path]) -> Tuple[List[TraversalSample], DatasetMeta]:
    path = require_file(path)
    with open(path, 'r') as f:
        header = json.loads(f.readline())
        meta = DatasetMeta(int(header['k']), header.get('value_mode'),
                           tuple(header['normalization']) if header.get('normalization') else None,
                           dict(header.get('seeds') or {}))
        samples = []
        for line in f:
            parts = line.split()
            if not parts:
                continue
            kind = LabelKind(parts[0])
            value = None if parts[1] == '-' else float(parts[1])
            coords = np.array([float(v) for v in parts[2:]])
            samples.append(TraversalSample(coords[:3], coords[3:].reshape(meta.k, 3), kind, value))
    return samples, meta
