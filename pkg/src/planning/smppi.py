# src/planning/smppi.py
"""Sampling-based MPC with noise injected on action derivatives.

Each step samples N perturbed derivative sequences around the nominal one,
rolls them out, and returns their softmin-weighted average. The plain
variant perturbs the actions themselves instead, for comparison.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.core.gridmap import GridMap2p5
from src.core.vehicle_sim import VehicleSpec
from src.planning.cost import CostBreakdown, CostParams, planning_costs
from src.planning.rollout import (STEER, V, ActionBounds, ControlSequence, Trajectory, integrate, rollout,
                                  rollout_batch)
from src.utils.errors import ConfigError, NoFeasibleSampleError
from src.utils.logger import logger


@dataclass
class MppiConfig:
    n_samples: int = 512
    horizon: int = 30
    dt: float = 0.1
    temperature: float = 0.5
    noise_std: Tuple[float, float] = (1.0, 1.5)
    action_noise_std: Tuple[float, float] = (0.1, 0.5)
    seed: int = 0
    smooth: bool = True
    max_steer_rate: float = 1.0
    max_accel: float = 2.0

    def __post_init__(self):
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be >= 2, got {self.n_samples}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.horizon < 1 or self.dt <= 0:
            raise ConfigError(f"horizon must be >= 1 and dt > 0, got {self.horizon}, {self.dt}")

    def bounds(self, vehicle: VehicleSpec) -> ActionBounds:
        return ActionBounds.for_vehicle(vehicle, self.max_steer_rate, self.max_accel)


@dataclass
class StepResult:
    controls: ControlSequence
    trajectory: Trajectory
    costs: CostBreakdown
    weights: np.ndarray


def softmin_weights(costs: np.ndarray, temperature: float) -> np.ndarray:
    """exp(-(c - c_min) / lambda) normalized to sum 1; non-finite costs get weight 0."""
    costs = np.asarray(costs, dtype=np.float64)
    finite = np.isfinite(costs)
    if not np.any(finite):
        raise NoFeasibleSampleError(f"all {len(costs)} sampled control sequences have non-finite cost")
    weights = np.zeros_like(costs)
    weights[finite] = np.exp(-(costs[finite] - costs[finite].min()) / temperature)
    return weights / weights.sum()


def weighted_average(samples: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Sum over the sample axis in index order."""
    return np.tensordot(weights, samples, axes=(0, 0))


def actions_to_derivatives(start: np.ndarray, actions: np.ndarray, dt: float) -> np.ndarray:
    """Inverse of the action integration: (..., H, 2) (steer, speed) -> (steer rate, accel)."""
    previous = np.concatenate([np.broadcast_to(np.asarray(start)[[STEER, V]], actions[..., :1, :].shape),
                               actions[..., :-1, :]], axis=-2)
    return (actions - previous) / dt


def smppi_step(state: np.ndarray, nominal: ControlSequence, grid: GridMap2p5, vehicle: VehicleSpec,
               params: CostParams, cfg: MppiConfig, goal: Optional[np.ndarray] = None,
               rng: Optional[np.random.Generator] = None) -> StepResult:
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    bounds = cfg.bounds(vehicle)
    dt = nominal.dt
    shape = (cfg.n_samples,) + nominal.derivatives.shape

    if cfg.smooth:
        noise = rng.standard_normal(shape) * np.asarray(cfg.noise_std)
        samples = np.clip(nominal.derivatives + noise, -bounds.derivative_limits, bounds.derivative_limits)
    else:
        nominal_actions = integrate(state, nominal.derivatives, dt, vehicle.wheelbase, bounds)[1:, [STEER, V]]
        noise = rng.standard_normal(shape) * np.asarray(cfg.action_noise_std)
        actions = nominal_actions + noise
        actions[..., 0] = np.clip(actions[..., 0], -bounds.max_steer, bounds.max_steer)
        actions[..., 1] = np.clip(actions[..., 1], bounds.min_speed, bounds.max_speed)
        # action jumps are allowed here, so derivative limits are lifted for the rollout
        bounds = ActionBounds(bounds.max_steer, bounds.max_speed, bounds.min_speed, np.inf, np.inf)
        samples = actions_to_derivatives(state, actions, dt)

    traj = rollout_batch(state, samples, dt, vehicle, grid, bounds)
    costs = planning_costs(traj, samples, goal, params)
    weights = softmin_weights(costs.total, cfg.temperature)
    if cfg.smooth:
        derivatives = weighted_average(samples, weights)
    else:
        derivatives = actions_to_derivatives(state, weighted_average(traj.actions, weights), dt)
    controls = ControlSequence(derivatives, dt)
    chosen = rollout(state, controls, vehicle, grid, bounds)
    logger.debug(f"smppi step: min cost {np.min(costs.total):.4f}, "
                 f"effective samples {1.0 / np.sum(weights ** 2):.1f}")
    return StepResult(controls, chosen, costs, weights)
