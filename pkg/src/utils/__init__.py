# src/utils/__init__.py
"""
Utility functions and helpers for the workbench.

Includes:
- logger: Custom logging configuration
- errors: Exception hierarchy
- textio: Plain-text numeric file helpers
- render: PPM and SVG figure output
"""

from .errors import TravbenchError
from .logger import logger, setup_logger

__all__ = [
    'logger',
    'setup_logger',
    'TravbenchError',
]
