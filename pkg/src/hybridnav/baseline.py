"""Smooth navigation-function controller and an adversarial estimate error.

The smooth loop ascends ``phi_nav(p) = -|p - p_T|^2 - beta * B(dist(p, N)^2)``
using a perturbed position ``p + e``.  Behind the obstacle there is a saddle
of ``phi_nav`` whose stable manifold is the ray from the obstacle center away
from the target; a bounded, piecewise-constant ``e`` chosen greedily can keep
the vehicle pinned there.  The same budget applied to the hybrid controller's
estimate does not stop it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import ControllerParams, HybridArc, simulate
from .errors import InsideObstacle, NoSaddleFound, SimulationError
from .geometry import Obstacle, Point2, as_point, build_covering
from .potentials import BarrierParams, PotentialField, barrier, barrier_deriv, grad_checked


def _barrier_second(s: float, rb: float) -> float:
    if s >= rb:
        return 0.0
    a = s - rb
    return 2.0 * math.log(1.0 / s) - 4.0 * a / s + a * a / (s * s)


@dataclass(frozen=True)
class NavigationFunction:
    target: Point2
    obstacle: Obstacle
    beta: float = 20.0
    rho_b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "target", as_point(self.target))
        if self.beta < 0:
            raise ValueError("repulsion weight beta must be nonnegative")
        BarrierParams(self.rho_b)

    def _geom(self, p):
        dx, dy = p[0] - self.obstacle.center.x, p[1] - self.obstacle.center.y
        r = math.hypot(dx, dy)
        d = r - self.obstacle.radius
        if d <= 0.0:
            raise InsideObstacle(f"point {tuple(p)} is inside the obstacle")
        return dx / r, dy / r, r, d

    def potential(self, p) -> float:
        _, _, _, d = self._geom(p)
        dx, dy = p[0] - self.target.x, p[1] - self.target.y
        return -(dx * dx + dy * dy) - self.beta * barrier(d * d, BarrierParams(self.rho_b))

    def grad(self, p) -> np.ndarray:
        return np.array(self.grad_xy(p))

    def grad_xy(self, p) -> tuple[float, float]:
        nx, ny, _, d = self._geom(p)
        coef = -self.beta * barrier_deriv(d * d, BarrierParams(self.rho_b)) * 2.0 * d
        return (-2.0 * (p[0] - self.target.x) + coef * nx,
                -2.0 * (p[1] - self.target.y) + coef * ny)

    def hessian(self, p) -> np.ndarray:
        nx, ny, r, d = self._geom(p)
        s = d * d
        n = np.array([nx, ny])
        grad_s = 2.0 * d * n
        hess_s = 2.0 * np.outer(n, n) + 2.0 * d * (np.eye(2) - np.outer(n, n)) / r
        b1 = barrier_deriv(s, BarrierParams(self.rho_b))
        b2 = _barrier_second(s, self.rho_b)
        return -2.0 * np.eye(2) - self.beta * (b2 * np.outer(grad_s, grad_s) + b1 * hess_s)


def nav_potential(nav: NavigationFunction, p) -> float:
    return nav.potential(p)


def nav_grad(nav: NavigationFunction, p) -> np.ndarray:
    return nav.grad(p)


def find_saddle(nav: NavigationFunction, n_seeds: int = 40, tol: float = 1e-10, max_iter: int = 60) -> Point2:
    """Newton search for the non-target critical point behind the obstacle.

    Seeds lie on the ray from the obstacle center pointing away from the
    target, spread over the barrier's activation layer.

    Raises
    ------
    NoSaddleFound
        If no seed converges to a critical point other than the target.
    """
    c = nav.obstacle.center
    ux, uy = c.x - nav.target.x, c.y - nav.target.y
    norm = math.hypot(ux, uy)
    ux, uy = ux / norm, uy / norm
    width = math.sqrt(nav.rho_b)
    for s in np.linspace(width * 1e-3, width, n_seeds):
        r = nav.obstacle.radius + s
        p = np.array([c.x + r * ux, c.y + r * uy])
        try:
            for _ in range(max_iter):
                g = nav.grad(p)
                if np.linalg.norm(g) < tol:
                    break
                step = np.linalg.solve(nav.hessian(p), g)
                p = p - step
        except (InsideObstacle, np.linalg.LinAlgError):
            continue
        g = nav.grad(p)
        if np.linalg.norm(g) < tol and math.hypot(p[0] - nav.target.x, p[1] - nav.target.y) > 1e-6:
            return Point2(float(p[0]), float(p[1]))
    raise NoSaddleFound("no non-target critical point found on the ray behind the obstacle")


def _ray_distance(p, origin, direction) -> float:
    vx, vy = p[0] - origin[0], p[1] - origin[1]
    t = vx * direction[0] + vy * direction[1]
    if t <= 0.0:
        return math.hypot(vx, vy)
    return abs(vx * direction[1] - vy * direction[0])


class Adversary:
    """Greedy one-step disturbance pinning trajectories to the saddle's stable ray.

    At each call, ``m_dirs`` vectors of length ``budget`` are tried; the one
    whose Euler step lands closest to the ray is returned.  Outside the
    engagement radius around the saddle the disturbance is zero.
    """

    def __init__(self, nav: NavigationFunction, saddle, budget: float, m_dirs: int = 16,
                 engagement: float = 1.0, k: float = 1.0, h: float = 0.01):
        self.nav = nav
        self.saddle = as_point(saddle)
        self.budget = float(budget)
        self.engagement = engagement
        self.k = k
        self.h = h
        c = nav.obstacle.center
        dx, dy = self.saddle.x - c.x, self.saddle.y - c.y
        n = math.hypot(dx, dy)
        self.origin = (c.x, c.y)
        self.direction = (dx / n, dy / n)
        ang = 2.0 * math.pi * np.arange(m_dirs) / m_dirs
        self.candidates = [(self.budget * math.cos(a), self.budget * math.sin(a)) for a in ang]
        self.emitted_max = 0.0

    def engaged(self, p) -> bool:
        return self.budget > 0.0 and math.hypot(p[0] - self.saddle.x, p[1] - self.saddle.y) <= self.engagement

    def _pick(self, p, velocity):
        best, best_cost = (0.0, 0.0), math.inf
        for e in self.candidates:
            v = velocity(e)
            if v is None:
                continue
            nxt = (p[0] + self.h * v[0], p[1] + self.h * v[1])
            cost = _ray_distance(nxt, self.origin, self.direction)
            if cost < best_cost:
                best, best_cost = e, cost
        self.emitted_max = max(self.emitted_max, math.hypot(*best))
        return best

    def smooth(self, p) -> tuple[float, float]:
        """Disturbance for the smooth loop ``p' = k grad phi_nav(p + e)``."""
        if not self.engaged(p):
            return 0.0, 0.0

        def velocity(e):
            try:
                gx, gy = self.nav.grad_xy((p[0] + e[0], p[1] + e[1]))
            except InsideObstacle:
                return None
            return self.k * gx, self.k * gy

        return self._pick(p, velocity)

    def hybrid(self, p, q, field: PotentialField, est) -> tuple[float, float]:
        """Disturbance added to the hybrid controller's estimate."""
        if not self.engaged(p):
            return 0.0, 0.0

        def velocity(e):
            g = grad_checked(field, q, est[0] + e[0], est[1] + e[1])
            if g is None:
                return None
            return -self.k * g[0], -self.k * g[1]

        return self._pick(p, velocity)


def adversarial_e(p, nav: NavigationFunction, saddle, budget: float, m_dirs: int = 16,
                  engagement: float = 1.0, k: float = 1.0, h: float = 0.01) -> np.ndarray:
    return np.array(Adversary(nav, saddle, budget, m_dirs, engagement, k, h).smooth(p))


def simulate_smooth(nav: NavigationFunction, p_init, t_end: float, k: float = 1.0, h: float = 0.01,
                    disturbance=None, delta: float = 0.0) -> HybridArc:
    """Integrate ``p' = k grad phi_nav(p + e)`` with ``e`` held over each RK4 step.

    The arc uses the standard schema with ``q = 0``; ``V1`` holds
    ``-phi_nav(p)`` and ``V2`` is NaN.  Stops early inside the ``delta`` ball.
    """
    p = as_point(p_init)
    arc = HybridArc()
    n_steps = int(round(t_end / h))
    tgt = nav.target

    def F(x, y, ex, ey):
        gx, gy = nav.grad_xy((x + ex, y + ey))
        return k * gx, k * gy

    for n in range(n_steps + 1):
        t = n * h
        e = disturbance(p) if disturbance is not None else (0.0, 0.0)
        arc.append(t, 0, p, 0, (p[0] + e[0], p[1] + e[1]), -nav.potential(p), math.nan, "flow", tgt)
        if math.hypot(p[0] - tgt.x, p[1] - tgt.y) <= delta:
            arc.status = "converged"
            return arc
        if n == n_steps:
            break
        x, y = p
        k1 = F(x, y, *e)
        k2 = F(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1], *e)
        k3 = F(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1], *e)
        k4 = F(x + h * k3[0], y + h * k3[1], *e)
        p = Point2(x + h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                   y + h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
    arc.status = "t_max"
    return arc


@dataclass
class DemoResult:
    smooth: HybridArc
    hybrid: HybridArc
    saddle: Point2
    budget: float
    max_disturbance: float

    def summary(self) -> dict:
        s, hy = self.smooth, self.hybrid
        tgt = (s.target_x[-1], s.target_y[-1])

        def final_dist(arc):
            return math.hypot(arc.x[-1] - tgt[0], arc.y[-1] - tgt[1])

        sp = s.positions
        near = np.hypot(sp[:, 0] - self.saddle.x, sp[:, 1] - self.saddle.y) <= 1.0
        stuck_until = float(s.t[int(np.argmin(near))]) if not near.all() else float(s.t[-1])
        return {
            "saddle": list(self.saddle),
            "budget": self.budget,
            "budget_zero": self.budget == 0.0,
            "max_disturbance": self.max_disturbance,
            "smooth": {"status": s.status, "final_distance": final_dist(s), "stuck_duration": stuck_until,
                       "max_saddle_distance": float(np.max(np.hypot(sp[:, 0] - self.saddle.x,
                                                                    sp[:, 1] - self.saddle.y)))},
            "hybrid": {"status": hy.status, "final_distance": final_dist(hy), "jumps": hy.jumps,
                       "time": hy.t[-1]},
        }


def demo_stuck(nav: NavigationFunction, budget: float, t_end: float = 50.0, p_init=None,
               params: ControllerParams | None = None, rho_b: float = 1.0, target_margin: float = 0.0,
               m_dirs: int = 16, engagement: float = 1.0) -> DemoResult:
    """Paired runs, smooth vs hybrid, under the same disturbance budget.

    ``p_init`` defaults to the saddle.  The hybrid controller uses the covering
    of the same obstacle and target; its adversary perturbs the estimate.
    """
    params = params or ControllerParams(t_max=t_end)
    saddle = find_saddle(nav)
    init = saddle if p_init is None else as_point(p_init)
    adv_s = Adversary(nav, saddle, budget, m_dirs, engagement, params.k, params.h)
    smooth = simulate_smooth(nav, init, t_end, params.k, params.h, adv_s.smooth, params.delta)
    cov = build_covering(nav.obstacle.center, nav.obstacle.radius, nav.target, target_margin)
    field = PotentialField.for_covering(cov, rho_b)
    adv_h = Adversary(nav, saddle, budget, m_dirs, engagement, params.k, params.h)
    try:
        hybrid = simulate(field, params, init, perturb=adv_h.hybrid)
    except SimulationError as exc:
        hybrid = exc.arc
    return DemoResult(smooth, hybrid, saddle, float(budget), max(adv_s.emitted_max, adv_h.emitted_max))
