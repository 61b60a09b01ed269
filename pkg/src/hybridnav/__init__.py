"""Hybrid feedback navigation around a disk obstacle with learned perception.

Two overlapping obstacle-free regions each carry a barrier potential; a
hysteresis supervisor picks which gradient to follow from a position
estimate produced by a nearest-neighbour map over camera observations.
"""

from .engine import ControllerParams, HybridArc, check_lyapunov, simulate
from .errors import (ConfigError, GradientUndefined, HybridNavError, InsideObstacle, InsufficientData,
                     LeftDomain, NoSaddleFound, OutOfExtent, OutsideRegion, SimulationError,
                     TargetTooClose, ZenoGuard)
from .geometry import Covering, Obstacle, Point2, build_covering
from .potentials import BarrierParams, PotentialField
from .scenarios import Scenario, builtin_scenario, load_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "BarrierParams", "ConfigError", "ControllerParams", "Covering", "GradientUndefined", "HybridArc",
    "HybridNavError", "InsideObstacle", "InsufficientData", "LeftDomain", "NoSaddleFound", "Obstacle",
    "OutOfExtent", "OutsideRegion", "Point2", "PotentialField", "Scenario", "SimulationError",
    "TargetTooClose", "ZenoGuard", "build_covering", "builtin_scenario", "check_lyapunov",
    "load_scenario", "run_scenario", "simulate",
]
