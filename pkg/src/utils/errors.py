# src/utils/errors.py
"""Exception types raised across the workbench.

Each error also derives from the builtin callers would expect for the situation,
so ``except ValueError`` style handlers keep working.
"""


class TravbenchError(Exception):
    """Base class for every error raised by the workbench."""


class InvalidSpecError(TravbenchError, ValueError):
    """Terrain recipe, grid dimensions or resolution are invalid."""


class PathViolatesMaskError(TravbenchError, ValueError):
    """A traversal path touches an obstacle cell or leaves the world."""


class InvalidPoseError(TravbenchError, ValueError):
    """A sensor pose sits below the terrain or inside an obstacle."""


class ConfigError(TravbenchError, ValueError):
    """Malformed configuration, unknown key or inconsistent shapes."""


class UsageError(TravbenchError, ValueError):
    """An API was called out of order or with an unsupported option."""


class CannotTrainError(TravbenchError, RuntimeError):
    """The training split has no positive samples."""


class UndefinedMetricError(TravbenchError, ValueError):
    """A metric was requested over an empty class."""


class InvalidStartError(TravbenchError, ValueError):
    """Planner start or goal lies outside the map."""


class NoFeasibleSampleError(TravbenchError, RuntimeError):
    """Every sampled control sequence produced a non-finite cost."""


class ArtifactNotFoundError(TravbenchError, FileNotFoundError):
    """An input artifact named on the command line does not exist."""
