"""
Bicycle rollout and trajectory cost tests.
"""

import numpy as np
import pytest

from src.core.gridmap import NON_TRAVERSABLE, TRAVERSABLE, UNKNOWN, map_from_world
from src.core.vehicle_sim import get_vehicle
from src.planning.cost import CostParams, cost, goal_term, planning_costs, stabilizing_term, uncertainty_term
from src.planning.rollout import (MASKED_IMPACT, V, YAW, ActionBounds, ControlSequence, Trajectory, integrate,
                                  make_state, rollout, rollout_batch)
from src.utils.errors import ConfigError, InvalidStartError
from tests.conftest import world_from_elevation


def _trajectory(wheel_class, wheel_impact, roll=None, pitch=None, center_value=None):
    wheel_class = np.asarray(wheel_class, dtype=np.int8)
    lead, horizon, n_wheels = wheel_class.shape[:-2], wheel_class.shape[-2], wheel_class.shape[-1]
    step_shape = lead + (horizon,)
    return Trajectory(np.zeros(lead + (horizon + 1, 5)), np.zeros(step_shape + (2,)),
                      np.zeros(step_shape + (n_wheels, 2)), wheel_class, np.asarray(wheel_impact, dtype=np.float64),
                      np.zeros(step_shape) if center_value is None else np.asarray(center_value),
                      np.zeros(step_shape) if roll is None else np.asarray(roll),
                      np.zeros(step_shape) if pitch is None else np.asarray(pitch), get_vehicle('suv'))


def test_zero_controls_from_rest_stay_put(flat_grid):
    start = make_state(8.0, 8.0, 0.3)
    traj = rollout(start, ControlSequence.zeros(10, 0.1), get_vehicle('suv'), flat_grid)
    assert np.all(traj.states == start)


def test_straight_flat_run_has_no_roll_or_pitch(flat_grid):
    traj = rollout(make_state(4.0, 8.0, 0.0, v=3.0), ControlSequence(np.tile([0.05, 0.0], (15, 1)), 0.1),
                   get_vehicle('suv'), flat_grid)
    assert np.allclose(traj.roll, 0.0, atol=1e-9)
    assert np.allclose(traj.pitch, 0.0, atol=1e-9)
    assert np.all(traj.wheel_class == TRAVERSABLE)


def test_constant_steer_rate_matches_scalar_integration():
    vehicle = get_vehicle('suv')
    bounds = ActionBounds.for_vehicle(vehicle)
    dt, rate, speed = 0.1, 0.2, 2.0
    states = integrate(make_state(0.0, 0.0, 0.0, v=speed), np.tile([rate, 0.0], (20, 1)), dt,
                       vehicle.wheelbase, bounds)
    x = y = yaw = steer = 0.0
    for _ in range(20):
        steer += rate * dt
        yaw += speed / vehicle.wheelbase * np.tan(steer) * dt
        x += speed * np.cos(yaw) * dt
        y += speed * np.sin(yaw) * dt
    assert states[-1, YAW] == pytest.approx(yaw, abs=1e-9)
    assert np.allclose(states[-1, :2], [x, y], atol=1e-9)


def test_actions_respect_bounds():
    vehicle = get_vehicle('suv')
    bounds = ActionBounds.for_vehicle(vehicle, max_steer_rate=0.5, max_accel=1.0)
    states = integrate(make_state(0.0, 0.0), np.tile([5.0, 10.0], (80, 1)), 0.1, vehicle.wheelbase, bounds)
    assert np.all(np.diff(states[:, V]) <= 0.1 + 1e-12)
    assert states[:, V].max() == pytest.approx(vehicle.speed)
    assert np.abs(states[:, 4]).max() == pytest.approx(vehicle.max_steer)


def test_pitch_on_a_slope():
    res = 0.25
    centers = (np.arange(64) + 0.5) * res
    grid = map_from_world(world_from_elevation(np.tile(0.1 * centers, (64, 1)), resolution=res))
    traj = rollout(make_state(6.0, 8.0, 0.0, v=1.0), ControlSequence.zeros(5, 0.1), get_vehicle('suv'), grid)
    assert np.allclose(traj.pitch, np.arctan(0.1), atol=0.01)
    assert np.allclose(traj.roll, 0.0, atol=1e-9)


def test_obstacle_contacts_are_non_traversable(obstacle_world):
    grid = map_from_world(obstacle_world)
    traj = rollout(make_state(4.0, 8.0, 0.0, v=3.0), ControlSequence.zeros(20, 0.1), get_vehicle('suv'), grid)
    assert np.any(traj.wheel_class == NON_TRAVERSABLE)
    assert np.all(traj.wheel_impact[traj.wheel_class == NON_TRAVERSABLE] == MASKED_IMPACT)
    assert cost(traj, CostParams(penalty=100.0)) > 50.0


def test_leaving_the_map_counts_as_unknown(flat_grid):
    traj = rollout(make_state(15.0, 8.0, 0.0, v=3.0), ControlSequence.zeros(5, 0.1), get_vehicle('suv'), flat_grid)
    assert np.any(traj.wheel_class == UNKNOWN)
    assert uncertainty_term(traj, CostParams(penalty=1.0)) == 5.0


def test_start_outside_the_map(flat_grid):
    with pytest.raises(InvalidStartError):
        rollout(make_state(-1.0, 8.0), ControlSequence.zeros(3, 0.1), get_vehicle('suv'), flat_grid)


def test_batch_rollout_shapes(flat_grid):
    derivs = np.random.default_rng(0).normal(size=(7, 12, 2))
    traj = rollout_batch(make_state(8.0, 8.0, v=1.0), derivs, 0.1, get_vehicle('offroad_6x6'), flat_grid)
    assert traj.states.shape == (7, 13, 5)
    assert traj.wheel_class.shape == (7, 12, 6)
    assert traj.sample(3).states.shape == (13, 5)


def test_control_sequence():
    seq = ControlSequence([[1.0, 2.0], [3.0, 4.0]], 0.1)
    assert seq.shifted().derivatives.tolist() == [[3.0, 4.0], [3.0, 4.0]]
    with pytest.raises(ConfigError):
        ControlSequence([[np.inf, 0.0]], 0.1)
    with pytest.raises(ConfigError):
        ControlSequence([[0.0, 0.0]], 0.0)


def test_cost_of_one_bad_step():
    traj = _trajectory([[1, 1, 1, 1], [1, 0, 1, 1]], [[0.05, 0.05, 0.0, 0.0], [0.1, 0.0, 0.0, 0.0]])
    assert cost(traj, CostParams(alpha1=0.5, alpha2=0.5, penalty=1.0)) == pytest.approx(0.6)


def test_alpha1_zero_ignores_non_traversable_contacts():
    clean = _trajectory([[1, 1, 1, 1]] * 3, np.full((3, 4), 0.1))
    dirty = _trajectory([[0, 0, 1, 1]] * 3, np.full((3, 4), 0.1))
    params = CostParams(alpha1=0.0, alpha2=1.0)
    assert cost(dirty, params) == cost(clean, params)
    assert cost(dirty, CostParams()) > cost(clean, CostParams())


@pytest.mark.parametrize("policy", ['roll_pitch', 'sum_wheel_impact', 'regression_value'])
def test_batch_cost_matches_scalar_recomputation(policy):
    rng = np.random.default_rng(1)
    classes = rng.choice([UNKNOWN, NON_TRAVERSABLE, TRAVERSABLE], size=(6, 5, 4), p=[0.1, 0.1, 0.8])
    impact = rng.uniform(size=(6, 5, 4))
    roll, pitch, center = rng.normal(0, 0.1, (6, 5)), rng.normal(0, 0.1, (6, 5)), rng.uniform(size=(6, 5))
    traj = _trajectory(classes, impact, roll, pitch, center)
    params = CostParams(alpha1=0.3, alpha2=0.7, penalty=10.0, policy=policy)
    vehicle = get_vehicle('suv')
    totals = cost(traj, params)
    for n in range(6):
        u = 0.0
        s = 0.0
        for t in range(5):
            if any(c != TRAVERSABLE for c in classes[n, t]):
                u += 10.0
            if policy == 'roll_pitch':
                s += abs(roll[n, t]) / vehicle.max_roll + abs(pitch[n, t]) / vehicle.max_pitch
            elif policy == 'sum_wheel_impact':
                s += sum(impact[n, t])
            else:
                s += center[n, t]
        assert totals[n] == pytest.approx(0.3 * u + 0.7 * s, abs=1e-12)


def test_stabilizing_policies_differ():
    traj = _trajectory([[1, 1, 1, 1]], [[0.2, 0.2, 0.2, 0.2]], roll=[0.1], pitch=[0.0], center_value=[0.5])
    values = {p: float(stabilizing_term(traj, CostParams(policy=p)))
              for p in ('roll_pitch', 'sum_wheel_impact', 'regression_value')}
    assert values['sum_wheel_impact'] == pytest.approx(0.8)
    assert values['regression_value'] == pytest.approx(0.5)
    assert values['roll_pitch'] == pytest.approx(0.1 / get_vehicle('suv').max_roll)


def test_goal_and_action_rate_terms(flat_grid):
    traj = rollout(make_state(4.0, 8.0, v=2.0), ControlSequence.zeros(5, 0.1), get_vehicle('suv'), flat_grid)
    params = CostParams(goal_weight=1.0, action_rate_weight=0.5)
    expected = sum((4.0 + 0.2 * (t + 1) - 10.0) ** 2 for t in range(5))
    assert float(goal_term(traj, np.array([10.0, 8.0]), params)) == pytest.approx(expected)
    derivs = np.ones((5, 2))
    breakdown = planning_costs(traj, derivs, np.array([10.0, 8.0]), params)
    assert float(breakdown.action_rate) == pytest.approx(5.0)
    assert float(breakdown.total) == pytest.approx(0.5 * float(breakdown.stabilizing) + expected + 5.0)


@pytest.mark.parametrize("kwargs", [{'policy': 'comfort'}, {'alpha1': -1.0}, {'penalty': 0.0}])
def test_cost_params_validation(kwargs):
    with pytest.raises(ConfigError):
        CostParams(**kwargs)
