# src/core/__init__.py
"""
Core components of the workbench.

Includes:
- terrain: synthetic height-field worlds
- vehicle_sim: quasi-static wheel-load simulation of vehicle presets
- lidar: ray-cast LiDAR scans
- datagen: PU dataset construction from traces and scans
- gridmap: 2.5D traversability grid maps
- config: pipeline and scenario configuration files
- workflow: the end-to-end benchmark graph
"""

from .datagen import DatasetSplit, TraversalSample, build_pu_dataset, read_dataset, write_dataset
from .gridmap import GridMap2p5, build_map, read_map, write_map
from .terrain import HeightField, TerrainRecipe, generate_world, read_world, write_world
from .vehicle_sim import VehicleSpec, get_vehicle, simulate_traversal

__all__ = [
    'DatasetSplit',
    'TraversalSample',
    'build_pu_dataset',
    'read_dataset',
    'write_dataset',
    'GridMap2p5',
    'build_map',
    'read_map',
    'write_map',
    'HeightField',
    'TerrainRecipe',
    'generate_world',
    'read_world',
    'write_world',
    'VehicleSpec',
    'get_vehicle',
    'simulate_traversal',
]
