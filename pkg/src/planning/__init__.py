# src/planning/__init__.py
"""
Sampling-based navigation over 2.5D traversability maps.

Includes:
- rollout: kinematic bicycle rollouts and map sampling
- cost: uncertainty / stabilizing cost terms
- smppi: one sampling step of the controller
- navigation: receding-horizon loop and trajectory logs
- scenarios: synthetic scenarios with oracle maps
"""

from .cost import CostParams, StabilizingPolicy, cost
from .navigation import NavigationResult, navigate
from .rollout import ControlSequence, Trajectory, rollout
from .smppi import MppiConfig, smppi_step

__all__ = ['CostParams', 'StabilizingPolicy', 'cost', 'NavigationResult', 'navigate', 'ControlSequence',
           'Trajectory', 'rollout', 'MppiConfig', 'smppi_step']
