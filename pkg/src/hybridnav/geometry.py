"""Covering of the plane around a disk obstacle.

The covering is built in an *aligned* frame whose origin is the obstacle
center and whose +x axis points at the target.  In that frame, with
``c = 2*sqrt(2)*rho``::

    O_1 = {(u, v) : v < |u| - c}      (below the upward wedge)
    O_2 = {(u, v) : v > c - |u|}      (above the downward wedge)

The complement of each region is a closed 90-degree wedge with apex at
``(0, -c)`` (q=1, opening up) or ``(0, c)`` (q=2, opening down).  The two
wedges intersect in the diamond ``|u| + |v| <= c`` whose inscribed radius is
``2*rho``, so the obstacle ball sits inside the diamond with a margin of
``rho``.  All public functions take and return world coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import TargetTooClose

SQRT2 = math.sqrt(2.0)
CLOSURE_TOL = 1e-9


class Point2(NamedTuple):
    x: float
    y: float


def as_point(p: Sequence[float]) -> Point2:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite point {p!r}")
    return Point2(x, y)


@dataclass(frozen=True)
class Obstacle:
    center: Point2
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if not self.radius > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.radius}")

    def contains(self, p) -> bool:
        return math.hypot(p[0] - self.center.x, p[1] - self.center.y) <= self.radius

    def distance(self, p) -> float:
        """Distance from ``p`` to the obstacle disk (0 inside)."""
        return max(0.0, math.hypot(p[0] - self.center.x, p[1] - self.center.y) - self.radius)


@dataclass(frozen=True)
class Wedge:
    """Closed 90-degree cone bounded by two 45-degree rays (world frame)."""

    apex: Point2
    axis: Point2  # unit vector along the opening direction
    opening: str  # "up" or "down" in the aligned frame


@dataclass(frozen=True)
class Covering:
    obstacle: Obstacle
    target: Point2
    angle: float
    target_margin: float = 0.0
    _cos: float = field(init=False, repr=False, compare=False)
    _sin: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "target", as_point(self.target))
        object.__setattr__(self, "_cos", math.cos(self.angle))
        object.__setattr__(self, "_sin", math.sin(self.angle))

    @property
    def offset(self) -> float:
        """Distance ``2*sqrt(2)*rho`` from the center to each wedge apex."""
        return 2.0 * SQRT2 * self.obstacle.radius

    @property
    def inscribed_radius(self) -> float:
        return self.offset / SQRT2

    @property
    def circumscribed_radius(self) -> float:
        return self.offset

    # frame changes -------------------------------------------------------
    def to_local(self, p) -> tuple[float, float]:
        dx = p[0] - self.obstacle.center.x
        dy = p[1] - self.obstacle.center.y
        return self._cos * dx + self._sin * dy, -self._sin * dx + self._cos * dy

    def to_world(self, u: float, v: float) -> Point2:
        c, s = self._cos, self._sin
        return Point2(self.obstacle.center.x + c * u - s * v,
                      self.obstacle.center.y + s * u + c * v)

    def vec_to_world(self, u: float, v: float) -> tuple[float, float]:
        c, s = self._cos, self._sin
        return c * u - s * v, s * u + c * v

    def local_many(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(pts, dtype=float)
        dx = pts[..., 0] - self.obstacle.center.x
        dy = pts[..., 1] - self.obstacle.center.y
        return self._cos * dx + self._sin * dy, -self._sin * dx + self._cos * dy

    # derived shapes ------------------------------------------------------
    def wedge(self, q: int) -> Wedge:
        """The closed complement of O_q."""
        _check_mode(q)
        if q == 1:
            apex = self.to_world(0.0, -self.offset)
            axis = self.vec_to_world(0.0, 1.0)
            return Wedge(apex, Point2(*axis), "up")
        apex = self.to_world(0.0, self.offset)
        axis = self.vec_to_world(0.0, -1.0)
        return Wedge(apex, Point2(*axis), "down")

    def diamond_vertices(self) -> list[Point2]:
        c = self.offset
        return [self.to_world(c, 0.0), self.to_world(0.0, c),
                self.to_world(-c, 0.0), self.to_world(0.0, -c)]

    def in_diamond(self, p, tol: float = 0.0) -> bool:
        u, v = self.to_local(p)
        return abs(u) + abs(v) <= self.offset + tol

    def in_closure_O(self, p, tol: float = CLOSURE_TOL) -> bool:
        """Membership in the closure of O_1 ∪ O_2 (complement of the open diamond)."""
        u, v = self.to_local(p)
        return abs(u) + abs(v) >= self.offset - tol

    def to_dict(self) -> dict:
        return {
            "obstacle": {"center": list(self.obstacle.center), "radius": self.obstacle.radius},
            "target": list(self.target),
            "target_margin": self.target_margin,
            "angle": self.angle,
            "diamond": [list(v) for v in self.diamond_vertices()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Covering":
        obs = Obstacle(as_point(d["obstacle"]["center"]), float(d["obstacle"]["radius"]))
        return build_covering(obs.center, obs.radius, d["target"], d.get("target_margin", 0.0))


def _check_mode(q: int) -> None:
    if q not in (1, 2):
        raise ValueError(f"mode must be 1 or 2, got {q!r}")


def build_covering(center, radius: float, target, target_margin: float = 0.0) -> Covering:
    """Build the two-region covering for an obstacle ball and a target.

    Raises
    ------
    TargetTooClose
        If ``|target - center| <= 2*sqrt(2)*radius + target_margin``.
    """
    obstacle = Obstacle(as_point(center), float(radius))
    target = as_point(target)
    dx, dy = target.x - obstacle.center.x, target.y - obstacle.center.y
    dist = math.hypot(dx, dy)
    limit = 2.0 * SQRT2 * obstacle.radius + target_margin
    if dist <= limit:
        raise TargetTooClose(
            f"target at distance {dist:.6g} from obstacle center; need > {limit:.6g}")
    return Covering(obstacle, target, math.atan2(dy, dx), float(target_margin))


def _canonical(cov: Covering, q: int, p) -> tuple[float, float]:
    # Map to coordinates (u, w) where the complement of O_q is {w >= |u|}.
    u, v = cov.to_local(p)
    if q == 1:
        return u, v + cov.offset
    return u, cov.offset - v


def in_region(cov: Covering, q: int, p, tol: float | None = None) -> bool:
    """Whether ``p`` lies in O_q.

    With ``tol=None`` the open set is tested (boundary points are outside).
    Passing a tolerance tests the closure, inflated by ``tol``.
    """
    _check_mode(q)
    u, w = _canonical(cov, q, p)
    if tol is None:
        return w < abs(u)
    return w <= abs(u) + tol


def _dist_and_normal(u: float, w: float) -> tuple[float, float, float]:
    # Distance from (u, w) to the cone {w >= |u|} and the unit gradient of that
    # distance in (u, w) coordinates. Gradient is (0, 0) inside the cone.
    au = abs(u)
    if w >= au:
        return 0.0, 0.0, 0.0
    if au + w > 0.0:
        d = (au - w) / SQRT2
        su = 1.0 if u >= 0.0 else -1.0
        return d, su / SQRT2, -1.0 / SQRT2
    d = math.hypot(u, w)
    return d, u / d, w / d


def dist_to_complement(cov: Covering, q: int, p) -> float:
    """Euclidean distance from ``p`` to the closed wedge ℝ² \\ O_q."""
    _check_mode(q)
    u, w = _canonical(cov, q, p)
    return _dist_and_normal(u, w)[0]


def dist_and_gradient(cov: Covering, q: int, p) -> tuple[float, float, float]:
    """Distance to ℝ² \\ O_q together with its world-frame gradient."""
    u, w = _canonical(cov, q, p)
    d, gu, gw = _dist_and_normal(u, w)
    gv = gw if q == 1 else -gw
    gx, gy = cov.vec_to_world(gu, gv)
    return d, gx, gy


def region_dist_grad(cov: Covering, q: int, x: float, y: float):
    """Fused open-membership test, distance and gradient (hot path of the integrator)."""
    u, w = _canonical(cov, q, (x, y))
    if not w < abs(u):
        return False, 0.0, 0.0, 0.0
    d, gu, gw = _dist_and_normal(u, w)
    gv = gw if q == 1 else -gw
    c, s = cov._cos, cov._sin
    return True, d, c * gu - s * gv, s * gu + c * gv


def nearest_in_complement(cov: Covering, q: int, p) -> Point2:
    """Closest point of the wedge ℝ² \\ O_q to ``p``."""
    d, gx, gy = dist_and_gradient(cov, q, p)
    return Point2(p[0] - d * gx, p[1] - d * gy)


# vectorized variants used for grids and bulk checks -----------------------

def _canonical_many(cov: Covering, q: int, pts) -> tuple[np.ndarray, np.ndarray]:
    u, v = cov.local_many(pts)
    if q == 1:
        return u, v + cov.offset
    return u, cov.offset - v


def in_region_many(cov: Covering, q: int, pts, tol: float | None = None) -> np.ndarray:
    _check_mode(q)
    u, w = _canonical_many(cov, q, pts)
    if tol is None:
        return w < np.abs(u)
    return w <= np.abs(u) + tol


def dist_and_gradient_many(cov: Covering, q: int, pts):
    """Vectorized :func:`dist_and_gradient`; returns ``(d, grad)`` with grad shape (..., 2)."""
    _check_mode(q)
    u, w = _canonical_many(cov, q, pts)
    au = np.abs(u)
    inside = w >= au
    edge = ~inside & (au + w > 0.0)
    apex = ~inside & ~edge
    d = np.zeros_like(u)
    gu = np.zeros_like(u)
    gw = np.zeros_like(u)
    d[edge] = (au[edge] - w[edge]) / SQRT2
    gu[edge] = np.where(u[edge] >= 0.0, 1.0, -1.0) / SQRT2
    gw[edge] = -1.0 / SQRT2
    r = np.hypot(u[apex], w[apex])
    d[apex] = r
    gu[apex] = u[apex] / r
    gw[apex] = w[apex] / r
    gv = gw if q == 1 else -gw
    c, s = cov._cos, cov._sin
    grad = np.stack([c * gu - s * gv, s * gu + c * gv], axis=-1)
    return d, grad


def dist_to_complement_many(cov: Covering, q: int, pts) -> np.ndarray:
    return dist_and_gradient_many(cov, q, pts)[0]
