"""Localization potentials V_1, V_2 and their gradients.

Each potential combines the quadratic attraction ``|p - p_T|^2`` with a
logarithmic barrier on the squared distance to the complement of its region::

    V_q(p) = B(d_q(p)^2) + |p - p_T|^2     for p in O_q
    V_q(p) = inf                           otherwise

with ``B(s) = (s - rho_b)^2 log(1/s)`` on ``(0, rho_b]`` and zero beyond.
``math.inf`` is the sentinel for points outside the region.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import OutsideRegion
from .geometry import (Covering, Point2, as_point, dist_and_gradient,
                       dist_and_gradient_many, in_region, in_region_many,
                       region_dist_grad)

INF = math.inf


@dataclass(frozen=True)
class BarrierParams:
    rho_b: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.rho_b <= 1.0):
            raise ValueError(f"barrier width rho_b must lie in (0, 1], got {self.rho_b}")


@dataclass(frozen=True)
class PotentialField:
    covering: Covering
    target: Point2
    barrier: BarrierParams = BarrierParams()

    def __post_init__(self):
        object.__setattr__(self, "target", as_point(self.target))

    @classmethod
    def for_covering(cls, covering: Covering, rho_b: float = 1.0) -> "PotentialField":
        return cls(covering, covering.target, BarrierParams(rho_b))

    def with_target(self, target) -> "PotentialField":
        """Same geometry, new attraction point (moving-target runs)."""
        return replace(self, target=as_point(target))

    def V(self, q: int, p) -> float:
        return V(self, q, p)

    def grad(self, q: int, p) -> np.ndarray:
        return grad_V(self, q, p)


def phi(p, target) -> float:
    """Attraction term, ``-|p - p_T|^2``."""
    dx, dy = p[0] - target[0], p[1] - target[1]
    return -(dx * dx + dy * dy)


def barrier(s: float, params: BarrierParams = BarrierParams()) -> float:
    if s < 0.0:
        raise ValueError(f"barrier argument must be nonnegative, got {s}")
    rb = params.rho_b
    if s >= rb:
        return 0.0
    if s == 0.0:
        return INF
    return (s - rb) ** 2 * math.log(1.0 / s)


def barrier_deriv(s: float, params: BarrierParams = BarrierParams()) -> float:
    if s < 0.0:
        raise ValueError(f"barrier argument must be nonnegative, got {s}")
    rb = params.rho_b
    if s >= rb:
        return 0.0
    if s == 0.0:
        return -INF
    return 2.0 * (s - rb) * math.log(1.0 / s) - (s - rb) ** 2 / s


def V(field: PotentialField, q: int, p) -> float:
    """Localization potential of mode ``q`` at ``p``; ``inf`` outside O_q."""
    cov = field.covering
    if not in_region(cov, q, p):
        return INF
    d, _, _ = dist_and_gradient(cov, q, p)
    dx, dy = p[0] - field.target[0], p[1] - field.target[1]
    return barrier(d * d, field.barrier) + dx * dx + dy * dy


def grad_xy(field: PotentialField, q: int, x: float, y: float) -> tuple[float, float]:
    """Gradient of V_q as a float pair; assumes ``(x, y)`` is in O_q."""
    d, nx, ny = dist_and_gradient(field.covering, q, (x, y))
    gx = 2.0 * (x - field.target[0])
    gy = 2.0 * (y - field.target[1])
    s = d * d
    if s < field.barrier.rho_b:
        coef = barrier_deriv(s, field.barrier) * 2.0 * d
        gx += coef * nx
        gy += coef * ny
    return gx, gy


def grad_checked(field: PotentialField, q: int, x: float, y: float):
    """``(gx, gy, d)`` if ``(x, y)`` is in O_q, else ``None``."""
    inside, d, nx, ny = region_dist_grad(field.covering, q, x, y)
    if not inside:
        return None
    gx = 2.0 * (x - field.target[0])
    gy = 2.0 * (y - field.target[1])
    s = d * d
    if s < field.barrier.rho_b:
        coef = barrier_deriv(s, field.barrier) * 2.0 * d
        gx += coef * nx
        gy += coef * ny
    return gx, gy, d


def grad_V(field: PotentialField, q: int, p) -> np.ndarray:
    """Analytic gradient of V_q.

    Raises
    ------
    OutsideRegion
        If ``p`` is not in the open region O_q.
    """
    if not in_region(field.covering, q, p):
        raise OutsideRegion(f"point {tuple(p)} is not in O_{q}")
    return np.array(grad_xy(field, q, float(p[0]), float(p[1])))


def proper_indicator(field: PotentialField, q: int, p) -> float:
    """Proper indicator of the target on O_q.

    V_q is used directly, so the comparison functions that sandwich V_q
    between indicator values are both the identity.
    """
    return V(field, q, p)


# grids --------------------------------------------------------------------

def _barrier_many(s: np.ndarray, rb: float) -> np.ndarray:
    out = np.zeros_like(s)
    act = s < rb
    sa = s[act]
    with np.errstate(divide="ignore"):
        out[act] = (sa - rb) ** 2 * np.log(1.0 / sa)
    return out


def _barrier_deriv_many(s: np.ndarray, rb: float) -> np.ndarray:
    out = np.zeros_like(s)
    act = s < rb
    sa = s[act]
    with np.errstate(divide="ignore", invalid="ignore"):
        out[act] = 2.0 * (sa - rb) * np.log(1.0 / sa) - (sa - rb) ** 2 / sa
    return out


def V_many(field: PotentialField, q: int, pts) -> np.ndarray:
    """Vectorized V_q over an array of points with shape (..., 2)."""
    pts = np.asarray(pts, dtype=float)
    inside = in_region_many(field.covering, q, pts)
    d, _ = dist_and_gradient_many(field.covering, q, pts)
    att = (pts[..., 0] - field.target[0]) ** 2 + (pts[..., 1] - field.target[1]) ** 2
    val = _barrier_many(d * d, field.barrier.rho_b) + att
    return np.where(inside, val, INF)


def grad_V_many(field: PotentialField, q: int, pts) -> np.ndarray:
    """Vectorized gradient; entries outside O_q are NaN."""
    pts = np.asarray(pts, dtype=float)
    inside = in_region_many(field.covering, q, pts)
    d, n = dist_and_gradient_many(field.covering, q, pts)
    with np.errstate(invalid="ignore"):
        coef = _barrier_deriv_many(d * d, field.barrier.rho_b) * 2.0 * d
        g = 2.0 * (pts - np.asarray(field.target)) + coef[..., None] * n
    g[~inside] = np.nan
    return g


def level_set_grid(field: PotentialField, q: int, window, resolution: float):
    """Evaluate V_q on a regular grid.

    ``window`` is ``(xmin, xmax, ymin, ymax)``.  Returns ``(xs, ys, values)``
    with ``values[i, j] = V_q(xs[j], ys[i])``.
    """
    xmin, xmax, ymin, ymax = window
    nx = int(round((xmax - xmin) / resolution)) + 1
    ny = int(round((ymax - ymin) / resolution)) + 1
    xs = np.linspace(xmin, xmax, nx)
    ys = np.linspace(ymin, ymax, ny)
    X, Y = np.meshgrid(xs, ys)
    vals = V_many(field, q, np.stack([X, Y], axis=-1))
    return xs, ys, vals


def write_level_set_csv(path, field: PotentialField, q: int, window, resolution: float) -> None:
    """Write ``x,y,V`` rows; points outside O_q are written as ``inf``."""
    xs, ys, vals = level_set_grid(field, q, window, resolution)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "V"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{vals[i, j]:.17g}"])
