"""Invariant suites: gradient, Lyapunov, coverage and geometry checks.

Every suite returns a list of :class:`Check` records.  A check carries the
measured quantity, the bound it is compared with, and (on failure) the
first counterexample found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import check_lyapunov, simulate
from .errors import SimulationError
from .geometry import (Covering, dist_to_complement, dist_to_complement_many, in_region,
                       in_region_many)
from .perception import ErrorModel, collect_training_data, coverage, fit, verify_bound
from .potentials import PotentialField, V_many, grad_V_many
from .scenarios import Scenario

SUITES = ("gradient", "lyapunov", "coverage", "geometry")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    measured: float
    bound: float
    counterexample: dict | None = None
    detail: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        """Distance from the bound, positive when the check holds."""
        return self.bound - self.measured

    def to_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "passed": self.passed,
                "measured": self.measured, "bound": self.bound, "margin": self.margin,
                "counterexample": self.counterexample, **self.detail}

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.suite}/{self.name}: measured={self.measured:.6g} bound={self.bound:.6g} margin={self.margin:.6g}"


def _window(cov: Covering, half: float = 30.0):
    c = cov.obstacle.center
    return (c.x - half, c.x + half, c.y - half, c.y + half)


def sample_region(cov: Covering, q: int, n: int, rng: np.random.Generator, d_lo: float, d_hi: float,
                  window=None) -> np.ndarray:
    """Uniform points of ``window`` inside O_q whose boundary distance lies in ``(d_lo, d_hi)``."""
    x0, x1, y0, y1 = window or _window(cov)
    out, have = [], 0
    while have < n:
        cand = rng.uniform([x0, y0], [x1, y1], size=(4 * n, 2))
        d = dist_to_complement_many(cov, q, cand)
        keep = in_region_many(cov, q, cand) & (d > d_lo) & (d < d_hi)
        out.append(cand[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:n]


def sample_barrier_layer(cov: Covering, q: int, n: int, rng: np.random.Generator, d_lo: float,
                         d_hi: float) -> np.ndarray:
    """Points of O_q at boundary distance uniform in ``(d_lo, d_hi)``.

    A boundary point of the wedge is drawn at random along one of its two
    edges and pushed along the outward normal, so the thin layer where the
    barrier is active gets dense coverage.
    """
    c = cov.offset
    sign = 1.0 if q == 1 else -1.0
    s = rng.uniform(0.0, 30.0, n)
    side = rng.choice([-1.0, 1.0], n)
    d = rng.uniform(d_lo, d_hi, n)
    # wedge edge in the aligned frame: apex (0, -sign*c), direction (side, sign)/sqrt2
    u = side * s / math.sqrt(2.0)
    v = -sign * c + sign * s / math.sqrt(2.0)
    # outward (into O_q) normal is (side, -sign)/sqrt2
    u = u + d * side / math.sqrt(2.0)
    v = v - d * sign / math.sqrt(2.0)
    pts = np.array([cov.to_world(a, b) for a, b in zip(u, v)])
    dd = dist_to_complement_many(cov, q, pts)
    ok = in_region_many(cov, q, pts) & (dd > d_lo) & (dd < d_hi)
    return pts[ok]


def fd_gradient(field: PotentialField, q: int, pts: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of V_q at each point."""
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    gx = (V_many(field, q, pts + ex) - V_many(field, q, pts - ex)) / (2 * step)
    gy = (V_many(field, q, pts + ey) - V_many(field, q, pts - ey)) / (2 * step)
    return np.column_stack([gx, gy])


def gradient_suite(field: PotentialField, n: int = 1000, seed: int = 0, step: float = 1e-5,
                   tol: float = 1e-5, d_range=(0.01, 10.0)) -> list[Check]:
    """Analytic gradient vs central differences, ``n`` points per region.

    Half the points are uniform over a window around the obstacle, half are
    concentrated in the barrier layer, all with boundary distance in
    ``d_range``.
    """
    rng = np.random.default_rng([seed, 4])
    cov = field.covering
    checks = []
    for q in (1, 2):
        layer_hi = min(d_range[1], math.sqrt(field.barrier.rho_b))
        pts = np.concatenate([sample_region(cov, q, n - n // 2, rng, *d_range),
                              sample_barrier_layer(cov, q, 2 * (n // 2), rng, d_range[0], layer_hi)[: n // 2]])
        ga = grad_V_many(field, q, pts)
        gf = fd_gradient(field, q, pts, step)
        rel = np.linalg.norm(ga - gf, axis=1) / np.maximum(np.linalg.norm(ga, axis=1), 1e-300)
        i = int(np.argmax(rel))
        worst = float(rel[i])
        ok = bool(worst < tol)
        cex = None if ok else {"q": q, "p": pts[i].tolist(), "analytic": ga[i].tolist(),
                               "finite_difference": gf[i].tolist(), "relative_error": worst}
        checks.append(Check("gradient", f"q{q}_relative_error", ok, worst, tol, cex,
                            {"n_points": int(len(pts))}))
    return checks


def nominal_inits(cov: Covering, window, n: int, seed: int) -> np.ndarray:
    """Random initial positions in O_1 ∪ O_2 inside ``window``."""
    rng = np.random.default_rng([seed, 2])
    x0, x1, y0, y1 = window
    out = []
    while len(out) < n:
        p = rng.uniform([x0, y0], [x1, y1])
        if in_region(cov, 1, p) or in_region(cov, 2, p):
            out.append(p)
    return np.array(out)


def lyapunov_suite(scenario: Scenario, n_runs: int = 20, seed: int = 0, max_jumps: int = 10) -> list[Check]:
    """Nominal runs (exact perception, no noise) checked for Lyapunov decrease.

    Also checks that every arc ends in ``converged`` or ``t_max`` and that
    no run makes more than ``max_jumps`` jumps.
    """
    field = scenario.field()
    params = scenario.controller
    inits = nominal_inits(field.covering, scenario.perception.region, n_runs, seed)
    flow_v = jump_v = 0
    worst_inc = -math.inf
    worst_ratio = 0.0
    first = None
    bad_status = []
    max_j = 0
    for p in inits:
        try:
            arc = simulate(field, params, p)
        except SimulationError as exc:
            arc = exc.arc
        rep = check_lyapunov(arc, field, params)
        flow_v += rep.flow_violations
        jump_v += rep.jump_violations
        worst_inc = max(worst_inc, rep.worst_flow_increase)
        worst_ratio = max(worst_ratio, rep.worst_jump_ratio)
        max_j = max(max_j, arc.jumps)
        if arc.status not in ("converged", "t_max"):
            bad_status.append({"init": p.tolist(), "status": arc.status, "message": arc.message})
        if first is None and not rep.passed:
            first = {"init": p.tolist(), "flow_violations": rep.flow_violations,
                     "jump_violations": rep.jump_violations}
    flow_tol = 1e-9 * params.h
    jump_bound = 1.0 / (params.chi - params.lam)
    return [
        Check("lyapunov", "flow_nonincrease", flow_v == 0, worst_inc, flow_tol,
              first if flow_v else None, {"violations": flow_v, "runs": n_runs}),
        Check("lyapunov", "jump_contraction", jump_v == 0, worst_ratio, jump_bound,
              first if jump_v else None, {"violations": jump_v, "runs": n_runs}),
        Check("lyapunov", "terminal_status", not bad_status, float(len(bad_status)), 0.0,
              bad_status[0] if bad_status else None),
        Check("lyapunov", "jump_count", max_j <= max_jumps, float(max_j), float(max_jumps)),
    ]


def coverage_suite(scenario: Scenario, n_samples: int = 10_000, seed: int = 0,
                   spacing: float | None = None, mode: str | None = None) -> list[Check]:
    """Fit a map, compute ε* by the coverage test and check it bounds the sampled error."""
    pc = scenario.perception
    r = pc.spacing if spacing is None else spacing
    mode = mode or (pc.mode if pc.mode != "exact" else "1nn")
    T = collect_training_data(scenario.world, pc.region, r, pc.camera())
    pmap = fit(T, mode)
    cov = coverage(pmap, T, pmap.lipschitz, math.inf)
    eps_star = cov.epsilon_star
    cov = coverage(pmap, T, pmap.lipschitz, eps_star)
    rep = verify_bound(pmap, scenario.world, cov, n_samples, eps_star, seed=[seed, 3])
    cex = None if rep.passed else {"p": list(rep.worst_position), "error": rep.max_error}
    return [Check("coverage", "epsilon_star_bounds_error", rep.passed, rep.max_error, eps_star, cex,
                  {"spacing": r, "mode": mode, "lipschitz": pmap.lipschitz, "n_samples": rep.n_samples,
                   "n_training": len(T)})]


def geometry_suite(cov: Covering, n: int = 10_000, seed: int = 0) -> list[Check]:
    """Diamond margin, target membership and obstacle exclusion."""
    rng = np.random.default_rng([seed, 1])
    rho = cov.obstacle.radius
    c = cov.obstacle.center
    checks = []
    # inscribed radius: distance from the center to the diamond's edges
    verts = np.array(cov.diamond_vertices())
    edge_d = []
    for a, b in zip(verts, np.roll(verts, -1, axis=0)):
        ab = b - a
        t = np.clip(np.dot(np.array(c) - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        edge_d.append(float(np.linalg.norm(a + t * ab - np.array(c))))
    inscribed = min(edge_d)
    err = abs(inscribed - 2 * rho)
    checks.append(Check("geometry", "inscribed_radius_2rho", err <= 1e-9 * max(1.0, rho), err,
                        1e-9 * max(1.0, rho), None, {"inscribed_radius": inscribed}))
    tin = [in_region(cov, q, cov.target) for q in (1, 2)]
    dmin = min(dist_to_complement(cov, q, cov.target) for q in (1, 2))
    checks.append(Check("geometry", "target_in_both_regions", all(tin), -dmin, 0.0,
                        None if all(tin) else {"target": list(cov.target), "in_O": tin}))
    # uniform samples in the obstacle disk
    r = rho * np.sqrt(rng.uniform(0.0, 1.0, n))
    th = rng.uniform(0.0, 2 * math.pi, n)
    pts = np.column_stack([c.x + r * np.cos(th), c.y + r * np.sin(th)])
    hit = in_region_many(cov, 1, pts) | in_region_many(cov, 2, pts)
    d_min = float(np.min(np.minimum(dist_to_complement_many(cov, 1, pts), dist_to_complement_many(cov, 2, pts))))
    cex = {"p": pts[int(np.argmax(hit))].tolist()} if hit.any() else None
    checks.append(Check("geometry", "obstacle_excluded", not hit.any(), float(hit.sum()), 0.0, cex,
                        {"n_samples": n, "min_distance_into_complement": d_min}))
    return checks


def run_suites(scenario: Scenario, suites=SUITES, seed: int = 0, n_gradient: int = 1000,
               n_runs: int = 20, n_coverage: int = 10_000, n_geometry: int = 10_000,
               spacing: float | None = None) -> list[Check]:
    checks: list[Check] = []
    for s in suites:
        if s == "gradient":
            checks += gradient_suite(scenario.field(), n_gradient, seed)
        elif s == "lyapunov":
            nominal = replace(scenario, perception=replace(scenario.perception, mode="exact"),
                              errors=ErrorModel())
            checks += lyapunov_suite(nominal, n_runs, seed)
        elif s == "coverage":
            checks += coverage_suite(scenario, n_coverage, seed, spacing)
        elif s == "geometry":
            checks += geometry_suite(scenario.covering(), n_geometry, seed)
        else:
            raise ValueError(f"unknown suite {s!r}")
    return checks
