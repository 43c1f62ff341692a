# src/core/vehicle_sim.py
"""Quasi-static wheel-load simulation of vehicles driving over a HeightField.

Each wheel carries a share of the weight resolved from the terrain's roll and
pitch under the wheel footprint, plus a dynamic term proportional to the
vertical acceleration of its contact point along the path.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from src.core.terrain import HeightField
from src.utils.errors import ConfigError, PathViolatesMaskError
from src.utils.logger import logger
from src.utils.textio import read_numeric_table, write_numeric_table

GRAVITY = 9.81


@dataclass
class VehicleSpec:
    name: str
    wheel_offsets: np.ndarray
    mass: float
    speed: float
    impact_tolerance: float
    max_roll: float
    max_pitch: float
    cog_height: float = 0.6
    max_steer: float = 0.5

    def __post_init__(self):
        self.wheel_offsets = np.asarray(self.wheel_offsets, dtype=np.float64).reshape(-1, 2)
        if self.wheel_offsets.shape[0] < 3:
            raise ConfigError(f"vehicle {self.name!r} needs at least 3 wheels")
        if self.mass <= 0 or self.impact_tolerance <= 0:
            raise ConfigError(f"vehicle {self.name!r}: mass and impact_tolerance must be > 0")
        if self.speed <= 0 or self.max_roll <= 0 or self.max_pitch <= 0:
            raise ConfigError(f"vehicle {self.name!r}: speed and roll/pitch limits must be > 0")

    @property
    def n_wheels(self) -> int:
        return self.wheel_offsets.shape[0]

    @property
    def wheelbase(self) -> float:
        return float(self.wheel_offsets[:, 0].max() - self.wheel_offsets[:, 0].min())

    @property
    def static_share(self) -> float:
        """Per-wheel load on flat ground."""
        return self.mass * GRAVITY / self.n_wheels


def _box_wheels(half_length: float, half_track: float) -> np.ndarray:
    return np.array([[half_length, half_track], [half_length, -half_track],
                     [-half_length, half_track], [-half_length, -half_track]])


VEHICLE_PRESETS: Dict[str, VehicleSpec] = {
    'compact_car': VehicleSpec('compact_car', _box_wheels(1.25, 0.75), mass=1200.0, speed=6.0,
                               impact_tolerance=4500.0, max_roll=0.25, max_pitch=0.3, cog_height=0.55),
    'suv': VehicleSpec('suv', _box_wheels(1.4, 0.85), mass=2000.0, speed=5.0,
                       impact_tolerance=9000.0, max_roll=0.3, max_pitch=0.35, cog_height=0.8),
    'offroad_6x6': VehicleSpec('offroad_6x6',
                               np.array([[1.6, 1.0], [1.6, -1.0], [0.0, 1.0], [0.0, -1.0],
                                         [-1.6, 1.0], [-1.6, -1.0]]),
                               mass=3600.0, speed=4.0, impact_tolerance=20000.0,
                               max_roll=0.4, max_pitch=0.45, cog_height=0.9),
}


def get_vehicle(name: str) -> VehicleSpec:
    if name not in VEHICLE_PRESETS:
        raise ConfigError(f"Unknown vehicle {name!r}; choose from {sorted(VEHICLE_PRESETS)}")
    return VEHICLE_PRESETS[name]


@dataclass
class SimTrace:
    """Time series recorded while a vehicle drives a path.

    contacts is (T, W, 3), wheel_forces (T, W) in N, z_accel (T,) in m/s^2.
    """
    vehicle: str
    impact_tolerance: float
    timestamps: np.ndarray
    poses: np.ndarray
    contacts: np.ndarray
    wheel_forces: np.ndarray
    z_accel: np.ndarray
    roll: np.ndarray = field(default=None)
    pitch: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def n_wheels(self) -> int:
        return self.contacts.shape[1]


def wheel_positions(poses: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """World xy of every wheel for poses (..., 3) -> (..., W, 2)."""
    poses = np.asarray(poses, dtype=np.float64)
    c = np.cos(poses[..., 2])[..., None]
    s = np.sin(poses[..., 2])[..., None]
    x = poses[..., 0][..., None] + c * offsets[:, 0] - s * offsets[:, 1]
    y = poses[..., 1][..., None] + s * offsets[:, 0] + c * offsets[:, 1]
    return np.stack([x, y], axis=-1)


def plane_fit_matrix(offsets: np.ndarray) -> np.ndarray:
    """Least-squares operator mapping wheel elevations to (z0, dz/du, dz/dv)."""
    design = np.column_stack([np.ones(len(offsets)), offsets[:, 0], offsets[:, 1]])
    return np.linalg.pinv(design)


def roll_pitch(wheel_z: np.ndarray, offsets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Roll and pitch (rad) of the plane fitted to wheel elevations (..., W).

    Pitch is positive nose-up, roll positive left-side-up.
    """
    coef = np.einsum('kw,...w->...k', plane_fit_matrix(offsets), wheel_z)
    return np.arctan(coef[..., 2]), np.arctan(coef[..., 1])


def static_loads(vehicle: VehicleSpec, roll: np.ndarray, pitch: np.ndarray) -> np.ndarray:
    """Minimum-norm wheel loads balancing weight and CoG moments on a tilted plane.

    Solves sum(F) = W, sum(F*u) = W*du, sum(F*v) = W*dv with the CoG shifted
    downhill by the tilt; negative shares are clipped to zero.
    """
    roll = np.asarray(roll, dtype=np.float64)
    pitch = np.asarray(pitch, dtype=np.float64)
    offsets = vehicle.wheel_offsets
    A = np.vstack([np.ones(vehicle.n_wheels), offsets[:, 0], offsets[:, 1]])
    gram = A @ A.T
    weight = vehicle.mass * GRAVITY * np.cos(roll) * np.cos(pitch)
    du = -vehicle.cog_height * np.sin(pitch)
    dv = -vehicle.cog_height * np.sin(roll)
    rhs = np.stack([weight, weight * du, weight * dv], axis=-1)
    lam = np.linalg.solve(gram, rhs[..., None])[..., 0]
    loads = lam @ A
    return np.maximum(loads, 0.0)


def wheel_loads(world: HeightField, vehicle: VehicleSpec, poses: np.ndarray, dt: float,
                speed: float = None) -> Dict[str, np.ndarray]:
    """Evaluate the load model along consecutive poses sampled every ``dt`` seconds.

    Returns contacts (T, W, 3), forces (T, W), z_accel (T,), roll (T,), pitch (T,).
    """
    speed = vehicle.speed if speed is None else speed
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 3)
    wheels_xy = wheel_positions(poses, vehicle.wheel_offsets)
    wheel_z = world.elevation_at(wheels_xy)
    roll, pitch = roll_pitch(wheel_z, vehicle.wheel_offsets)
    forces = static_loads(vehicle, roll, pitch)

    ds = speed * dt
    accel = np.zeros_like(wheel_z)
    if len(poses) >= 3 and ds > 0:
        second_diff = wheel_z[2:] - 2.0 * wheel_z[1:-1] + wheel_z[:-2]
        accel[1:-1] = second_diff / ds ** 2 * speed ** 2
    share = vehicle.mass / vehicle.n_wheels
    forces = np.maximum(forces + share * accel, 0.0)
    contacts = np.concatenate([wheels_xy, wheel_z[..., None]], axis=-1)
    return {'contacts': contacts, 'forces': forces, 'z_accel': accel.mean(axis=-1),
            'roll': roll, 'pitch': pitch}


def resample_path(path: np.ndarray, step: float) -> np.ndarray:
    """Poses (x, y, yaw) every ``step`` metres along a polyline, endpoints included."""
    path = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    if len(path) < 2:
        raise PathViolatesMaskError("path needs at least two waypoints")
    seg = np.diff(path, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    keep = seg_len > 0
    if not np.any(keep):
        raise PathViolatesMaskError("path has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n = int(np.floor(total / step + 1e-9)) + 1
    s = np.arange(n) * step
    if total - s[-1] > 1e-9:
        s = np.append(s, total)
    x = np.interp(s, cum, path[:, 0])
    y = np.interp(s, cum, path[:, 1])
    seg_idx = np.clip(np.searchsorted(cum, s, side='right') - 1, 0, len(seg) - 1)
    seg_yaw = np.arctan2(seg[:, 1], seg[:, 0])
    # zero-length segments inherit the previous real heading; leading ones the first real heading
    last_real = np.maximum.accumulate(np.where(keep, np.arange(len(seg)), -1))
    last_real[last_real < 0] = np.flatnonzero(keep)[0]
    seg_yaw = seg_yaw[last_real]
    return np.column_stack([x, y, seg_yaw[seg_idx]])


def simulate_traversal(world: HeightField, vehicle: VehicleSpec, path: Sequence, dt: float) -> SimTrace:
    """Drive ``vehicle`` along ``path`` at its nominal speed and record proprioception."""
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    poses = resample_path(np.asarray(path), vehicle.speed * dt)
    wheels_xy = wheel_positions(poses, vehicle.wheel_offsets)
    rows, cols, inside = world.cell_of(wheels_xy)
    if not np.all(inside):
        bad = int(np.argmin(inside.all(axis=-1)))
        raise PathViolatesMaskError(f"wheel contact leaves the world at step {bad}")
    hits = world.obstacle_mask[rows, cols]
    if np.any(hits):
        bad = int(np.argmax(hits.any(axis=-1)))
        raise PathViolatesMaskError(f"wheel contact enters an obstacle cell at step {bad} "
                                    f"(pose {poses[bad, :2].round(2).tolist()})")

    loads = wheel_loads(world, vehicle, poses, dt)
    timestamps = np.arange(len(poses)) * dt
    logger.debug(f"Simulated {vehicle.name} over {len(poses)} steps; "
                 f"peak wheel force {loads['forces'].max():.1f} N")
    return SimTrace(vehicle.name, vehicle.impact_tolerance, timestamps, poses, loads['contacts'],
                    loads['forces'], loads['z_accel'], loads['roll'], loads['pitch'])


def true_impact(trace: SimTrace, vehicle: VehicleSpec) -> float:
    """Accumulated deviation of wheel forces from the flat-ground share (N)."""
    return float(np.abs(trace.wheel_forces - vehicle.static_share).sum())


TRACE_COLUMNS = "t x y yaw z_accel then per wheel: cx cy cz force"


def write_trace(path: Union[str, Path], trace: SimTrace) -> None:
    rows = []
    for i in range(len(trace)):
        row = [trace.timestamps[i], *trace.poses[i], trace.z_accel[i]]
        for w in range(trace.n_wheels):
            row.extend([*trace.contacts[i, w], trace.wheel_forces[i, w]])
        rows.append(row)
    header = f"vehicle={trace.vehicle} impact_tolerance={trace.impact_tolerance!r} columns: {TRACE_COLUMNS}"
    write_numeric_table(path, header, rows)


def read_trace(path: Union[str, Path]) -> SimTrace:
    header, table = read_numeric_table(path)
    meta = dict(tok.split('=', 1) for tok in header.split(' columns:')[0].split())
    n_wheels = (table.shape[1] - 5) // 4
    per_wheel = table[:, 5:].reshape(len(table), n_wheels, 4)
    return SimTrace(meta['vehicle'], float(meta['impact_tolerance']), table[:, 0], table[:, 1:4],
                    per_wheel[..., :3], per_wheel[..., 3], table[:, 4])
