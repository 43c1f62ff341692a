# src/planning/rollout.py
"""Kinematic bicycle rollouts over a 2.5D grid map.

The planner controls action derivatives (steer rate, acceleration); steering
angle and speed are their clipped integrals. State vectors are
``(x, y, yaw, v, steer)``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.gridmap import TRAVERSABLE, GridMap2p5
from src.core.vehicle_sim import VehicleSpec, roll_pitch, wheel_positions
from src.utils.errors import ConfigError, InvalidStartError

X, Y, YAW, V, STEER = range(5)
STATE_DIM = 5
MASKED_IMPACT = 1.0


@dataclass
class ActionBounds:
    max_steer: float
    max_speed: float
    min_speed: float = 0.0
    max_steer_rate: float = 1.0
    max_accel: float = 2.0

    @classmethod
    def for_vehicle(cls, vehicle: VehicleSpec, max_steer_rate: float = 1.0, max_accel: float = 2.0) -> 'ActionBounds':
        return cls(vehicle.max_steer, vehicle.speed, 0.0, max_steer_rate, max_accel)

    @property
    def derivative_limits(self) -> np.ndarray:
        return np.array([self.max_steer_rate, self.max_accel])


@dataclass
class ControlSequence:
    """H rows of (steer rate rad/s, accel m/s^2) applied every ``dt`` seconds."""
    derivatives: np.ndarray
    dt: float

    def __post_init__(self):
        self.derivatives = np.asarray(self.derivatives, dtype=np.float64).reshape(-1, 2)
        if len(self.derivatives) < 1:
            raise ConfigError("control sequence needs at least one step")
        if self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if not np.all(np.isfinite(self.derivatives)):
            raise ConfigError("control sequence must be finite")

    @property
    def horizon(self) -> int:
        return len(self.derivatives)

    @classmethod
    def zeros(cls, horizon: int, dt: float) -> 'ControlSequence':
        return cls(np.zeros((horizon, 2)), dt)

    def shifted(self) -> 'ControlSequence':
        """Drop the executed first step and repeat the last one."""
        return ControlSequence(np.concatenate([self.derivatives[1:], self.derivatives[-1:]]), self.dt)


@dataclass
class Trajectory:
    """Rollout result; every array may carry a leading sample axis.

    states (..., H+1, 5) includes the start; the per-step layers below are
    (..., H, W) or (..., H) for steps 1..H.
    """
    states: np.ndarray
    actions: np.ndarray
    wheel_xy: np.ndarray
    wheel_class: np.ndarray
    wheel_impact: np.ndarray
    center_value: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    vehicle: VehicleSpec

    def sample(self, i: int) -> 'Trajectory':
        return Trajectory(self.states[i], self.actions[i], self.wheel_xy[i], self.wheel_class[i],
                          self.wheel_impact[i], self.center_value[i], self.roll[i], self.pitch[i], self.vehicle)

    @property
    def positions(self) -> np.ndarray:
        return self.states[..., 1:, :2]


def make_state(x: float, y: float, yaw: float = 0.0, v: float = 0.0, steer: float = 0.0) -> np.ndarray:
    return np.array([x, y, yaw, v, steer], dtype=np.float64)


def integrate(start: np.ndarray, derivatives: np.ndarray, dt: float, wheelbase: float,
              bounds: ActionBounds) -> np.ndarray:
    """Semi-implicit bicycle integration of (..., H, 2) derivative sequences -> (..., H+1, 5) states."""
    derivatives = np.clip(derivatives, -bounds.derivative_limits, bounds.derivative_limits)
    lead = derivatives.shape[:-2]
    horizon = derivatives.shape[-2]
    states = np.empty(lead + (horizon + 1, STATE_DIM))
    states[..., 0, :] = start
    cur = np.broadcast_to(np.asarray(start, dtype=np.float64), lead + (STATE_DIM,)).copy()
    for t in range(horizon):
        steer = np.clip(cur[..., STEER] + derivatives[..., t, 0] * dt, -bounds.max_steer, bounds.max_steer)
        v = np.clip(cur[..., V] + derivatives[..., t, 1] * dt, bounds.min_speed, bounds.max_speed)
        yaw = cur[..., YAW] + v / wheelbase * np.tan(steer) * dt
        cur[..., X] += v * np.cos(yaw) * dt
        cur[..., Y] += v * np.sin(yaw) * dt
        cur[..., YAW] = yaw
        cur[..., V] = v
        cur[..., STEER] = steer
        states[..., t + 1, :] = cur
    return states


def check_start(start: np.ndarray, grid: GridMap2p5) -> None:
    if not grid.contains(np.asarray(start)[:2]):
        raise InvalidStartError(f"start {np.asarray(start)[:2].tolist()} is outside the map")


def rollout_batch(start: np.ndarray, derivatives: np.ndarray, dt: float, vehicle: VehicleSpec,
                  grid: GridMap2p5, bounds: Optional[ActionBounds] = None) -> Trajectory:
    """Roll out (N, H, 2) derivative sequences from one start and sample the map under every wheel."""
    bounds = bounds or ActionBounds.for_vehicle(vehicle)
    start = np.asarray(start, dtype=np.float64).reshape(STATE_DIM)
    check_start(start, grid)
    derivatives = np.asarray(derivatives, dtype=np.float64)
    states = integrate(start, derivatives, dt, vehicle.wheelbase, bounds)
    steps = states[..., 1:, :]
    actions = steps[..., [STEER, V]]

    wheels = wheel_positions(steps[..., :3], vehicle.wheel_offsets)
    layers = grid.sample(wheels)
    wheel_z = layers['elevation']
    # unknown wheels take the mean elevation of the known ones in the same step
    known_mean = np.nanmean(np.where(np.isnan(wheel_z).all(axis=-1, keepdims=True), 0.0, wheel_z), axis=-1)
    wheel_z = np.where(np.isnan(wheel_z), known_mean[..., None], wheel_z)
    roll, pitch = roll_pitch(wheel_z, vehicle.wheel_offsets)

    traversable = layers['class'] == TRAVERSABLE
    impact = np.where(traversable, np.nan_to_num(layers['value'], nan=MASKED_IMPACT), MASKED_IMPACT)
    center = grid.sample(steps[..., :2])
    center_value = np.where(center['class'] == TRAVERSABLE,
                            np.nan_to_num(center['value'], nan=MASKED_IMPACT), MASKED_IMPACT)
    return Trajectory(states, actions, wheels, layers['class'], impact, center_value, roll, pitch, vehicle)


def rollout(start: np.ndarray, controls: ControlSequence, vehicle: VehicleSpec, grid: GridMap2p5,
            bounds: Optional[ActionBounds] = None) -> Trajectory:
    """Single-sequence rollout without a sample axis."""
    return rollout_batch(start, controls.derivatives[None], controls.dt, vehicle, grid, bounds).sample(0)
