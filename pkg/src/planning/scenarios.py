# src/planning/scenarios.py
"""Navigation scenarios on synthetic worlds with oracle maps.

The oracle map marks obstacle cells non-traversable and fills the value layer
with each vehicle's expected dynamic wheel-load ratio, so vehicles with a
higher impact tolerance see the same bumps as cheaper.
"""
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from src.core.gridmap import NON_TRAVERSABLE, GridMap2p5, map_from_world
from src.core.terrain import HeightField, TerrainFeature, flat_recipe, generate_world
from src.core.vehicle_sim import VehicleSpec, get_vehicle, wheel_positions
from src.planning.cost import CostParams
from src.planning.navigation import NavigationResult, navigate
from src.planning.smppi import MppiConfig
from src.utils.errors import ConfigError

SCENARIOS = ('obstacle_band', 'bump_band', 'curved_road')


def impact_layer(world: HeightField, vehicle: VehicleSpec, speed: Optional[float] = None) -> np.ndarray:
    """Per-cell dynamic wheel load over the impact tolerance, clipped to [0, 1].

    Uses the simulator's dynamic term (m / N) * v^2 * |d2z/ds2| with the largest
    curvature over the x and y directions.
    """
    speed = vehicle.speed if speed is None else speed
    res = world.resolution
    z = gaussian_filter(world.elevation, sigma=0.5, mode='nearest')
    d2x = np.abs(np.gradient(np.gradient(z, res, axis=1), res, axis=1))
    d2y = np.abs(np.gradient(np.gradient(z, res, axis=0), res, axis=0))
    force = vehicle.mass / vehicle.n_wheels * speed ** 2 * np.maximum(d2x, d2y)
    return np.clip(force / vehicle.impact_tolerance, 0.0, 1.0)


def oracle_map(world: HeightField, vehicle: VehicleSpec) -> GridMap2p5:
    return map_from_world(world, impact_layer(world, vehicle))


@dataclass
class Scenario:
    name: str
    world: HeightField
    start: np.ndarray
    goal: np.ndarray
    vehicle: VehicleSpec
    params: CostParams = field(default_factory=CostParams)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    max_steps: int = 300
    goal_radius: float = 1.0

    def grid(self) -> GridMap2p5:
        return oracle_map(self.world, self.vehicle)

    def run(self, grid: Optional[GridMap2p5] = None, **overrides) -> NavigationResult:
        """Navigate with cost parameters replaced by ``overrides`` (e.g. alpha1=0).

        ``grid`` replaces the oracle map, e.g. with one predicted by a trained model.
        """
        params = replace(self.params, **overrides) if overrides else self.params
        return navigate(self.grid() if grid is None else grid, self.start, self.goal, self.vehicle, params, self.mppi,
                        self.max_steps, self.goal_radius, world=self.world)

    def obstacle_contacts(self, result: NavigationResult) -> int:
        """Executed wheel contacts on cells that are obstacles in the world itself."""
        wheels = wheel_positions(result.states[1:, :3], self.vehicle.wheel_offsets)
        return int(np.sum(self.grid().sample(wheels)['class'] == NON_TRAVERSABLE))


def obstacle_band(seed: int = 0, vehicle: str = 'suv', mppi: Optional[MppiConfig] = None) -> Scenario:
    """Flat 20 x 12 m field crossed by a wall of obstacle cells with a gap at the top."""
    features = [TerrainFeature('obstacle', 10.0, y, size=0.5) for y in np.arange(0.0, 6.01, 0.5)]
    world = generate_world(seed, flat_recipe(width=80, height=48, resolution=0.25, features=features))
    return Scenario('obstacle_band', world, np.array([3.0, 3.5, 0.0]), np.array([17.0, 3.5]),
                    get_vehicle(vehicle), mppi=mppi or MppiConfig(seed=seed))


def bump_band(seed: int = 0, vehicle: str = 'suv', amplitude: float = 0.25,
              mppi: Optional[MppiConfig] = None) -> Scenario:
    """Flat 24 x 24 m field with a ridge of tough bumps across the direct route."""
    features = [TerrainFeature('ridge', 12.0, 12.0, amplitude, size=3.0, aspect=7.0, angle=np.pi / 2)]
    world = generate_world(seed, flat_recipe(width=96, height=96, resolution=0.25, features=features))
    return Scenario('bump_band', world, np.array([3.0, 12.0, 0.0]), np.array([21.0, 12.0]),
                    get_vehicle(vehicle), params=CostParams(policy='sum_wheel_impact'),
                    mppi=mppi or MppiConfig(seed=seed))


def curved_road(seed: int = 0, vehicle: str = 'compact_car', mppi: Optional[MppiConfig] = None) -> Scenario:
    """A sinuous road through obstacle-filled terrain."""
    recipe = flat_recipe(width=96, height=64, resolution=0.25)
    recipe.base_roughness = 0.03
    world = generate_world(seed, recipe)
    xx, yy = world.cell_centers()
    centerline = 8.0 + 3.0 * np.sin(xx / 24.0 * 2.0 * np.pi)
    off_road = np.abs(yy - centerline) > 2.5
    mask = world.obstacle_mask | off_road
    world = HeightField(world.origin, world.resolution, world.width, world.height, world.elevation, mask,
                        world.obstacle_height)
    start_y = 8.0 + 3.0 * np.sin(2.0 / 24.0 * 2.0 * np.pi)
    goal_y = 8.0 + 3.0 * np.sin(22.0 / 24.0 * 2.0 * np.pi)
    return Scenario('curved_road', world, np.array([2.0, start_y, 0.6]), np.array([22.0, goal_y]),
                    get_vehicle(vehicle), mppi=mppi or MppiConfig(seed=seed), max_steps=400)


def build_scenario(name: str, seed: int = 0, vehicle: Optional[str] = None,
                   mppi: Optional[MppiConfig] = None) -> Scenario:
    builders = {'obstacle_band': obstacle_band, 'bump_band': bump_band, 'curved_road': curved_road}
    if name not in builders:
        raise ConfigError(f"Unknown scenario {name!r}; choose from {list(SCENARIOS)}")
    kwargs = {'seed': seed, 'mppi': mppi}
    if vehicle:
        kwargs['vehicle'] = vehicle
    return builders[name](**kwargs)


def scenario_names() -> List[str]:
    return list(SCENARIOS)
