# src/planning/navigation.py
"""Receding-horizon navigation loop and its per-step log."""
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from src.core.gridmap import NON_TRAVERSABLE, GridMap2p5
from src.core.terrain import HeightField
from src.core.vehicle_sim import VehicleSpec, wheel_loads, wheel_positions
from src.planning.cost import CostParams
from src.planning.rollout import STEER, V, X, Y, YAW, ActionBounds, ControlSequence, check_start, integrate
from src.planning.smppi import MppiConfig, smppi_step
from src.utils.errors import InvalidStartError
from src.utils.logger import logger
from src.utils.textio import ensure_parent

DEFAULT_GOAL_RADIUS = 1.0


@dataclass
class StepLog:
    step: int
    x: float
    y: float
    yaw: float
    v: float
    steer: float
    steer_rate: float
    accel: float
    uncertainty: float
    stabilizing: float
    goal: float
    total: float
    wheel_classes: str


@dataclass
class NavigationResult:
    states: np.ndarray
    logs: List[StepLog] = field(default_factory=list)
    reached: bool = False
    timed_out: bool = False
    contact_classes: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int8))
    true_impact: float = 0.0

    @property
    def poses(self) -> np.ndarray:
        return self.states[:, [X, Y, YAW]]

    @property
    def non_traversable_contacts(self) -> int:
        """Executed wheel contacts on cells the planner knew to be non-traversable."""
        return int(np.sum(self.contact_classes == NON_TRAVERSABLE))


def executed_impact(world: HeightField, vehicle: VehicleSpec, states: np.ndarray, dt: float) -> float:
    """Accumulated |F - static share| of the executed poses under the terrain load model."""
    if len(states) < 3:
        return 0.0
    speed = float(np.mean(states[1:, V]))
    loads = wheel_loads(world, vehicle, states[:, [X, Y, YAW]], dt, speed=max(speed, 1e-6))
    forces = np.nan_to_num(loads['forces'], nan=vehicle.static_share)
    return float(np.abs(forces - vehicle.static_share).sum())


def lateral_deviation(states: np.ndarray, start: np.ndarray, goal: np.ndarray) -> float:
    """Largest perpendicular distance of the executed path from the straight start-goal line."""
    start = np.asarray(start, dtype=np.float64)[:2]
    goal = np.asarray(goal, dtype=np.float64)[:2]
    direction = goal - start
    length = np.hypot(*direction)
    if length == 0 or len(states) == 0:
        return 0.0
    rel = states[:, :2] - start
    return float(np.max(np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0]) / length))


def navigate(grid: GridMap2p5, start: np.ndarray, goal: np.ndarray, vehicle: VehicleSpec, params: CostParams,
             cfg: MppiConfig, max_steps: int = 300, goal_radius: float = DEFAULT_GOAL_RADIUS,
             world: Optional[HeightField] = None) -> NavigationResult:
    """Plan, execute the first action, shift the nominal sequence, repeat.

    ``start`` is (x, y, yaw[, v, steer]). Stops within ``goal_radius`` of the goal
    or after ``max_steps`` (a timeout, reported on the result). When ``world``
    is given, the executed poses are replayed through the wheel-load model.
    """
    start = np.asarray(start, dtype=np.float64)
    state = np.zeros(5)
    state[:len(start)] = start
    goal = np.asarray(goal, dtype=np.float64)[:2]
    check_start(state, grid)
    if not grid.contains(goal):
        raise InvalidStartError(f"goal {goal.tolist()} is outside the map")

    bounds = cfg.bounds(vehicle)
    if not cfg.smooth:
        bounds = ActionBounds(bounds.max_steer, bounds.max_speed, bounds.min_speed, np.inf, np.inf)
    rng = np.random.default_rng(cfg.seed)
    nominal = ControlSequence.zeros(cfg.horizon, cfg.dt)
    states = [state.copy()]
    logs: List[StepLog] = []
    contacts = []
    reached = np.hypot(*(state[:2] - goal)) <= goal_radius

    step = 0
    while not reached and step < max_steps:
        result = smppi_step(state, nominal, grid, vehicle, params, cfg, goal=goal, rng=rng)
        u0 = result.controls.derivatives[:1]
        state = integrate(state, u0, cfg.dt, vehicle.wheelbase, bounds)[-1]
        states.append(state.copy())
        step += 1

        wheels = wheel_positions(state[[X, Y, YAW]], vehicle.wheel_offsets)
        classes = grid.sample(wheels)['class'].astype(np.int8)
        contacts.append(classes)
        chosen = planning_breakdown(result)
        logs.append(StepLog(step, *(float(v) for v in state), float(u0[0, 0]), float(u0[0, 1]),
                            chosen['uncertainty'], chosen['stabilizing'], chosen['goal'], chosen['total'],
                            ' '.join(str(int(c)) for c in classes)))
        nominal = result.controls.shifted()
        reached = np.hypot(*(state[:2] - goal)) <= goal_radius

    states_arr = np.asarray(states)
    contact_arr = np.asarray(contacts, dtype=np.int8).reshape(len(contacts), vehicle.n_wheels)
    out = NavigationResult(states_arr, logs, bool(reached), not reached, contact_arr)
    if world is not None:
        out.true_impact = executed_impact(world, vehicle, states_arr, cfg.dt)
    if out.timed_out:
        logger.warning(f"navigation timed out after {max_steps} steps, "
                       f"{np.hypot(*(state[:2] - goal)):.2f} m from the goal")
    else:
        logger.info(f"reached goal in {step} steps ({out.non_traversable_contacts} non-traversable contacts)")
    return out


def planning_breakdown(result) -> dict:
    """Cost breakdown of the weighted-best sample of a step."""
    best = int(np.argmax(result.weights))
    return result.costs.at(best)


def write_trajectory_csv(path: Union[str, Path], result: NavigationResult, label: str = 'executed') -> None:
    """One row per executed step plus a row 0 for the start state."""
    rows = [StepLog(0, *(float(v) for v in result.states[0]), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, '')]
    frame = pd.DataFrame([asdict(r) for r in rows + list(result.logs)])
    frame.insert(0, 'label', label)
    frame.to_csv(ensure_parent(path), index=False, lineterminator='\n')


def read_trajectory_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path, keep_default_na=False)
