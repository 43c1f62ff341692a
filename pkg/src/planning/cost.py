# src/planning/cost.py
"""Trajectory cost: alpha1 * Uncertainty + alpha2 * Stabilizing.

Uncertainty counts the steps where any wheel sits on a non-traversable or
unknown cell, times a large penalty M. Stabilizing depends on the policy.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from src.core.gridmap import TRAVERSABLE
from src.planning.rollout import Trajectory
from src.utils.errors import ConfigError


class StabilizingPolicy(str, Enum):
    ROLL_PITCH = 'roll_pitch'
    SUM_WHEEL_IMPACT = 'sum_wheel_impact'
    REGRESSION_VALUE = 'regression_value'


@dataclass
class CostParams:
    alpha1: float = 0.5
    alpha2: float = 0.5
    penalty: float = 1e6
    policy: StabilizingPolicy = StabilizingPolicy.SUM_WHEEL_IMPACT
    goal_weight: float = 0.01
    action_rate_weight: float = 0.0

    def __post_init__(self):
        try:
            self.policy = StabilizingPolicy(self.policy)
        except ValueError:
            raise ConfigError(f"unknown stabilizing policy {self.policy!r}; "
                              f"choose from {[p.value for p in StabilizingPolicy]}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ConfigError(f"alpha1 and alpha2 must be >= 0, got {self.alpha1}, {self.alpha2}")
        if self.penalty <= 0:
            raise ConfigError(f"penalty M must be > 0, got {self.penalty}")
        if self.goal_weight < 0 or self.action_rate_weight < 0:
            raise ConfigError("goal_weight and action_rate_weight must be >= 0")


@dataclass
class CostBreakdown:
    uncertainty: np.ndarray
    stabilizing: np.ndarray
    goal: np.ndarray
    action_rate: np.ndarray
    total: np.ndarray

    def at(self, i: int) -> dict:
        return {name: float(getattr(self, name)[i])
                for name in ('uncertainty', 'stabilizing', 'goal', 'action_rate', 'total')}


def uncertainty_term(traj: Trajectory, params: CostParams) -> np.ndarray:
    bad_steps = np.any(traj.wheel_class != TRAVERSABLE, axis=-1)
    return params.penalty * bad_steps.sum(axis=-1)


def stabilizing_term(traj: Trajectory, params: CostParams) -> np.ndarray:
    if params.policy == StabilizingPolicy.ROLL_PITCH:
        v = traj.vehicle
        return np.sum(np.abs(traj.roll) / v.max_roll + np.abs(traj.pitch) / v.max_pitch, axis=-1)
    if params.policy == StabilizingPolicy.SUM_WHEEL_IMPACT:
        return traj.wheel_impact.sum(axis=(-2, -1))
    return traj.center_value.sum(axis=-1)


def cost(traj: Trajectory, params: CostParams) -> Union[float, np.ndarray]:
    """alpha1 * U + alpha2 * S; a float for a single trajectory, else one value per sample."""
    total = params.alpha1 * uncertainty_term(traj, params) + params.alpha2 * stabilizing_term(traj, params)
    return float(total) if np.ndim(total) == 0 else total


def goal_term(traj: Trajectory, goal: Optional[np.ndarray], params: CostParams) -> np.ndarray:
    """goal_weight * sum_t ||p_t - goal||^2 over the horizon."""
    if goal is None or params.goal_weight == 0.0:
        return np.zeros(traj.states.shape[:-2])
    diff = traj.positions - np.asarray(goal, dtype=np.float64)[:2]
    return params.goal_weight * np.sum(diff * diff, axis=(-2, -1))


def action_rate_term(derivatives: np.ndarray, params: CostParams) -> np.ndarray:
    if params.action_rate_weight == 0.0:
        return np.zeros(derivatives.shape[:-2])
    return params.action_rate_weight * np.sum(derivatives * derivatives, axis=(-2, -1))


def planning_costs(traj: Trajectory, derivatives: np.ndarray, goal: Optional[np.ndarray],
                   params: CostParams) -> CostBreakdown:
    """Full sampling cost: the two-term trajectory cost plus goal attraction and action-rate penalty."""
    u = uncertainty_term(traj, params)
    s = stabilizing_term(traj, params)
    g = goal_term(traj, goal, params)
    r = action_rate_term(derivatives, params)
    total = params.alpha1 * u + params.alpha2 * s + g + r
    return CostBreakdown(u, s, g, r, total)
