"""Exception types raised across the package."""


class HybridNavError(Exception):
    """Base class for all package errors."""


class TargetTooClose(HybridNavError):
    """The target lies inside the exclusion ball around the obstacle."""


class OutsideRegion(HybridNavError):
    """A gradient was requested at a point outside the open region O_q."""


class GradientUndefined(HybridNavError):
    """A flow step was requested with an estimate outside O_q."""


class OutOfExtent(HybridNavError):
    """A position falls outside the camera's render window."""


class InsufficientData(HybridNavError):
    """Not enough training samples to fit the requested perception map."""


class InsideObstacle(HybridNavError):
    """The navigation potential was evaluated inside the obstacle."""


class NoSaddleFound(HybridNavError):
    """Newton search exhausted its seeds without finding a saddle."""


class ConfigError(HybridNavError):
    """A configuration document failed validation."""


class SimulationError(HybridNavError):
    """A simulation stopped abnormally. The partial arc is kept on ``arc``."""

    def __init__(self, message, arc=None):
        super().__init__(message)
        self.arc = arc


class ZenoGuard(SimulationError):
    """The jump counter reached J_max."""


class LeftDomain(SimulationError):
    """The estimate left C ∪ D and the supervisor could not continue."""
