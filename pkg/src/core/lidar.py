# src/core/lidar.py
"""Ray-marched multi-channel LiDAR over a HeightField.

Rays advance in steps of half a cell. A sample hits when it drops below the
bilinear ground surface or enters an obstacle column; the crossing is then
refined by bisection between the last free sample and the first hit.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.core.terrain import HeightField
from src.utils.errors import InvalidPoseError
from src.utils.logger import logger
from src.utils.textio import read_numeric_table, write_numeric_table

DEFAULT_VERTICAL_FOV = (np.deg2rad(-25.0), np.deg2rad(15.0))
BISECTION_ITERS = 12
RAY_CHUNK = 4096


@dataclass
class LidarScan:
    """Points are (n, 3) in the world frame; pose is (x, y, z, yaw)."""
    pose: np.ndarray
    points: np.ndarray
    channels: int

    def __len__(self) -> int:
        return len(self.points)


def channel_angles(channels: int, vertical_fov: Tuple[float, float],
                   single_channel_pitch: Optional[float] = None) -> np.ndarray:
    """Elevation of every channel, evenly spread over ``vertical_fov``.

    A single channel points at ``single_channel_pitch`` when given and at the
    lower bound of the field of view otherwise.
    """
    low, high = vertical_fov
    if channels == 1:
        pitch = low if single_channel_pitch is None else single_channel_pitch
        return np.array([pitch], dtype=np.float64)
    return np.linspace(low, high, channels)


def _occupied(world: HeightField, pts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(hit, outside) flags for sample points (..., 3)."""
    ground = world.surface_at(pts[..., :2])
    outside = np.isnan(ground)
    below_ground = pts[..., 2] <= np.where(outside, -np.inf, ground)
    rows, cols, inside = world.cell_of(pts[..., :2])
    in_obstacle = np.zeros(rows.shape, dtype=bool)
    in_obstacle[inside] = world.obstacle_mask[rows[inside], cols[inside]]
    cell_z = np.zeros(rows.shape)
    cell_z[inside] = world.elevation[rows[inside], cols[inside]]
    in_column = in_obstacle & (pts[..., 2] <= cell_z + world.obstacle_height)
    return (below_ground | in_column) & ~outside, outside


def sample_lidar(world: HeightField, pose, channels: int, azimuth_steps: int, max_range: float,
                 vertical_fov: Tuple[float, float] = DEFAULT_VERTICAL_FOV,
                 single_channel_pitch: Optional[float] = None) -> LidarScan:
    """Cast ``channels x azimuth_steps`` rays from ``pose`` and keep the first hits."""
    pose = np.asarray(pose, dtype=np.float64).reshape(4)
    if channels < 1 or azimuth_steps < 1:
        raise InvalidPoseError(f"channels and azimuth_steps must be >= 1, got {channels}, {azimuth_steps}")
    origin = pose[:3]
    ground = world.surface_at(origin[None, :2])[0]
    if np.isnan(ground):
        raise InvalidPoseError(f"sensor at {origin[:2].tolist()} is outside the world")
    hit, _ = _occupied(world, origin[None, :])
    if origin[2] <= ground or hit[0]:
        raise InvalidPoseError(f"sensor z={origin[2]:.3f} is below terrain ({ground:.3f}) or inside an obstacle")

    step = world.resolution / 2.0
    elev = channel_angles(channels, vertical_fov, single_channel_pitch)
    azim = pose[3] + np.arange(azimuth_steps) * (2.0 * np.pi / azimuth_steps)
    ee, aa = np.meshgrid(elev, azim, indexing='ij')
    dirs = np.stack([np.cos(ee) * np.cos(aa), np.cos(ee) * np.sin(aa), np.sin(ee)], axis=-1).reshape(-1, 3)

    n_steps = int(np.ceil(max_range / step))
    ts = np.arange(1, n_steps + 1) * step
    ts[-1] = min(ts[-1], max_range)
    points = []
    for start in range(0, len(dirs), RAY_CHUNK):
        d = dirs[start:start + RAY_CHUNK]
        samples = origin + ts[None, :, None] * d[:, None, :]
        hit, outside = _occupied(world, samples)
        # a ray that leaves the world before hitting anything is a miss
        stop = hit | outside
        first = np.argmax(stop, axis=1)
        has_stop = stop[np.arange(len(d)), first]
        is_hit = has_stop & hit[np.arange(len(d)), first]
        if not np.any(is_hit):
            continue
        d = d[is_hit]
        hi = ts[first[is_hit]]
        lo = np.where(first[is_hit] > 0, ts[np.maximum(first[is_hit] - 1, 0)], 0.0)
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (lo + hi)
            mid_hit, _ = _occupied(world, origin + mid[:, None] * d)
            hi = np.where(mid_hit, mid, hi)
            lo = np.where(mid_hit, lo, mid)
        keep = hi <= max_range
        points.append(origin + hi[keep, None] * d[keep])

    pts = np.concatenate(points, axis=0) if points else np.zeros((0, 3))
    logger.debug(f"LiDAR scan at {pose[:3].round(2).tolist()}: {len(pts)} points")
    return LidarScan(pose, pts, channels)


def scan_along_trace(world: HeightField, poses: np.ndarray, mount_height: float, every: int,
                     channels: int, azimuth_steps: int, max_range: float,
                     vertical_fov: Tuple[float, float] = DEFAULT_VERTICAL_FOV) -> list:
    """Scans from every ``every``-th vehicle pose with the sensor ``mount_height`` above ground."""
    scans = []
    for x, y, yaw in np.asarray(poses)[::max(every, 1)]:
        z = world.surface_at(np.array([[x, y]]))[0] + mount_height
        scans.append(sample_lidar(world, (x, y, z, yaw), channels, azimuth_steps, max_range, vertical_fov))
    return scans


def survey_scans(world: HeightField, spacing: float, mount_height: float, channels: int, azimuth_steps: int,
                 max_range: float, vertical_fov: Tuple[float, float] = DEFAULT_VERTICAL_FOV) -> list:
    """Scans from a regular grid of sensor positions covering the whole world.

    Positions over obstacle cells are skipped.
    """
    if spacing <= 0:
        raise InvalidPoseError(f"survey spacing must be > 0, got {spacing}")
    x0, y0, x1, y1 = world.extent
    xs = np.arange(x0 + spacing / 2.0, x1, spacing)
    ys = np.arange(y0 + spacing / 2.0, y1, spacing)
    xy = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    rows, cols, inside = world.cell_of(xy)
    free = inside & ~world.obstacle_mask[np.where(inside, rows, 0), np.where(inside, cols, 0)]
    xy = xy[free]
    ground = world.surface_at(xy)
    scans = [sample_lidar(world, (x, y, z + mount_height, 0.0), channels, azimuth_steps, max_range, vertical_fov)
             for (x, y), z in zip(xy, ground)]
    logger.info(f"Surveyed {len(scans)} sensor positions at {spacing} m spacing")
    return scans


def write_scan(path: Union[str, Path], scan: LidarScan) -> None:
    header = (f"pose={','.join(repr(float(v)) for v in scan.pose)} channels={scan.channels} "
              f"columns: x y z")
    write_numeric_table(path, header, scan.points)


def read_scan(path: Union[str, Path]) -> LidarScan:
    header, table = read_numeric_table(path)
    meta = dict(tok.split('=', 1) for tok in header.split(' columns:')[0].split())
    pose = np.array([float(v) for v in meta['pose'].split(',')])
    return LidarScan(pose, table.reshape(-1, 3), int(meta['channels']))
