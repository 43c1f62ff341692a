# src/__init__.py
"""
Self-supervised traversability workbench.

Exposes main components for easy import:
from src import generate_world, train, navigate
"""

from .core.terrain import generate_world
from .learning.trainer import train
from .planning.navigation import navigate

__all__ = ['generate_world', 'train', 'navigate']
