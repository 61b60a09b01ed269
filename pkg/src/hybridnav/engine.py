"""Hybrid closed loop: flows, jumps, hysteresis supervisor and arcs.

The loop state is ``(p, q)``.  At every sample instant the supervisor looks
at the position *estimate* and either flows with ``p' = -k grad V_q`` for
one sample period, toggles ``q``, or halts when the estimate is unusable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import GradientUndefined, LeftDomain, ZenoGuard
from .geometry import Point2, as_point
from .potentials import INF, V, PotentialField, grad_checked

FLOW, JUMP, HALT = "flow", "jump", "halt"
DROPOUT = "dropout"

CSV_COLUMNS = ("t", "j", "x", "y", "q", "est_x", "est_y", "V1", "V2", "event")


class HybridState(NamedTuple):
    p: Point2
    q: int


class HybridTime(NamedTuple):
    t: float
    j: int


@dataclass(frozen=True)
class ControllerParams:
    k: float = 1.0
    chi: float = 1.1
    lam: float = 0.09
    h: float = 0.01
    t_max: float = 200.0
    j_max: int = 100
    dwell: float = 0.0
    delta: float = 0.5
    # Integration inside one sample period: RK4 substeps no longer than
    # max_substep whose displacement stays below substep_fraction * d.
    max_substep: float | None = None
    substep_fraction: float = 0.25
    min_substep: float = 1e-10
    # What to do with an estimate outside closure(O): "hold" the last valid
    # estimate (treated as a dropout) or "halt".
    on_invalid_estimate: str = "hold"
    # How a held estimate evolves while frames are missing: "predict"
    # advances it by the commanded displacement since it was taken (the
    # offset est - p stays frozen); "zero-order" reuses it unchanged.
    hold: str = "predict"

    def __post_init__(self):
        if not self.chi > 1.0:
            raise ValueError(f"chi must exceed 1, got {self.chi}")
        # relative slack so that lam == chi - 1 is rejected despite rounding
        if not (0.0 < self.lam < (self.chi - 1.0) * (1.0 - 1e-12)):
            raise ValueError(f"lambda must lie in (0, chi - 1) = (0, {self.chi - 1:g}), got {self.lam}")
        if self.k < 0.0:
            raise ValueError("gain k must be nonnegative")
        if not self.h > 0.0:
            raise ValueError("sample period h must be positive")
        if self.dwell < 0.0:
            raise ValueError("dwell time must be nonnegative")
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.on_invalid_estimate not in ("hold", "halt"):
            raise ValueError("on_invalid_estimate must be 'hold' or 'halt'")
        if self.hold not in ("predict", "zero-order"):
            raise ValueError("hold must be 'predict' or 'zero-order'")


# set membership ----------------------------------------------------------

def _values(field: PotentialField, est, q: int) -> tuple[float, float]:
    return V(field, q, est), V(field, 3 - q, est)


def in_flow_set(field: PotentialField, est, q: int, chi: float) -> bool:
    """``est ∈ closure(O)`` and ``V_q(est) <= chi * V_{3-q}(est)`` with V_q finite."""
    if not field.covering.in_closure_O(est):
        return False
    vq, vo = _values(field, est, q)
    return vq < INF and vq <= chi * vo


def in_jump_set(field: PotentialField, est, q: int, chi: float, lam: float) -> bool:
    """``est ∈ closure(O)`` and ``V_q(est) >= (chi - lam) * V_{3-q}(est)``."""
    if not field.covering.in_closure_O(est):
        return False
    vq, vo = _values(field, est, q)
    if vq == INF and vo == INF:
        return False
    return vq >= (chi - lam) * vo


def jump(state: HybridState) -> HybridState:
    return HybridState(state.p, 3 - state.q)


def supervise(field: PotentialField, state: HybridState, est, params: ControllerParams,
              time_since_jump: float = INF) -> str:
    """Pick the next action; flows take priority inside the hysteresis band."""
    if not field.covering.in_closure_O(est):
        return HALT
    q = state.q
    vq, vo = _values(field, est, q)
    if vq == INF and vo == INF:
        return HALT
    if vq > params.chi * vo:
        return JUMP if time_since_jump >= params.dwell else HALT
    return FLOW


# flows -------------------------------------------------------------------

def flow_step(state: HybridState, est, field: PotentialField, params: ControllerParams) -> HybridState:
    """Advance ``p`` over one sample period with the perception offset held.

    The offset ``e = est - p`` is frozen, so the integrated vector field is
    ``-k grad V_q(p + e)``.  Substeps are classical RK4.
    """
    q = state.q
    ex, ey = est[0] - state.p[0], est[1] - state.p[1]
    px, py = float(state.p[0]), float(state.p[1])
    k = params.k
    first = grad_checked(field, q, px + ex, py + ey)
    if first is None:
        raise GradientUndefined(f"estimate {tuple(est)} is not in O_{q}")
    if k == 0.0:
        return HybridState(Point2(px, py), q)
    hmax = params.h if params.max_substep is None else min(params.h, params.max_substep)
    remaining = params.h
    g1 = first
    while remaining > 0.0:
        gx, gy, d = g1
        gnorm = math.hypot(gx, gy)
        hs = min(remaining, hmax)
        if gnorm > 0.0:
            hs = min(hs, params.substep_fraction * d / (k * gnorm))
        while True:
            if hs < params.min_substep:
                raise GradientUndefined("substep underflow while integrating near the region boundary")
            out = _rk4(field, q, px, py, ex, ey, k, hs, g1)
            if out is not None:
                break
            hs *= 0.5
        px, py, g1 = out
        remaining = remaining - hs if hs < remaining else 0.0
    return HybridState(Point2(px, py), q)


def _rk4(field, q, px, py, ex, ey, k, hs, g1):
    k1x, k1y = -k * g1[0], -k * g1[1]
    g2 = grad_checked(field, q, px + ex + 0.5 * hs * k1x, py + ey + 0.5 * hs * k1y)
    if g2 is None:
        return None
    k2x, k2y = -k * g2[0], -k * g2[1]
    g3 = grad_checked(field, q, px + ex + 0.5 * hs * k2x, py + ey + 0.5 * hs * k2y)
    if g3 is None:
        return None
    k3x, k3y = -k * g3[0], -k * g3[1]
    g4 = grad_checked(field, q, px + ex + hs * k3x, py + ey + hs * k3y)
    if g4 is None:
        return None
    k4x, k4y = -k * g4[0], -k * g4[1]
    nx = px + hs / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    ny = py + hs / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
    gn = grad_checked(field, q, nx + ex, ny + ey)
    if gn is None:
        return None
    return nx, ny, gn


# arcs --------------------------------------------------------------------

@dataclass
class HybridArc:
    """Samples of a solution on its hybrid time domain.

    ``V1``/``V2`` are evaluated at the true position.  ``status`` is one of
    ``converged``, ``t_max``, ``zeno`` or ``left_domain``.
    """

    t: list = field(default_factory=list)
    j: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    q: list = field(default_factory=list)
    est_x: list = field(default_factory=list)
    est_y: list = field(default_factory=list)
    V1: list = field(default_factory=list)
    V2: list = field(default_factory=list)
    event: list = field(default_factory=list)
    target_x: list = field(default_factory=list)
    target_y: list = field(default_factory=list)
    status: str = "running"
    message: str = ""

    def __len__(self):
        return len(self.t)

    def append(self, t, j, p, q, est, v1, v2, event, target):
        self.t.append(t)
        self.j.append(j)
        self.x.append(p[0])
        self.y.append(p[1])
        self.q.append(q)
        self.est_x.append(est[0])
        self.est_y.append(est[1])
        self.V1.append(v1)
        self.V2.append(v2)
        self.event.append(event)
        self.target_x.append(target[0])
        self.target_y.append(target[1])

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y]) if self.t else np.zeros((0, 2))

    @property
    def estimates(self) -> np.ndarray:
        return np.column_stack([self.est_x, self.est_y]) if self.t else np.zeros((0, 2))

    @property
    def targets(self) -> np.ndarray:
        return np.column_stack([self.target_x, self.target_y]) if self.t else np.zeros((0, 2))

    @property
    def jumps(self) -> int:
        return self.j[-1] if self.j else 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def times(self) -> list[HybridTime]:
        return [HybridTime(t, j) for t, j in zip(self.t, self.j)]

    def rows(self):
        for i in range(len(self.t)):
            yield (self.t[i], self.j[i], self.x[i], self.y[i], self.q[i],
                   self.est_x[i], self.est_y[i], self.V1[i], self.V2[i], self.event[i])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            write_arc_csv(fh, self)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.17g}"


def write_arc_csv(fh, arc: HybridArc) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in arc.rows():
        w.writerow([_fmt(v) for v in row])


def read_arc_csv(path) -> HybridArc:
    arc = HybridArc()
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            p = (float(r["x"]), float(r["y"]))
            arc.append(float(r["t"]), int(r["j"]), p, int(r["q"]),
                       (float(r["est_x"]), float(r["est_y"])),
                       float(r["V1"]), float(r["V2"]), r["event"], (math.nan, math.nan))
    arc.status = "loaded"
    return arc


# closed loop -------------------------------------------------------------

Estimator = Callable[[Point2, float], tuple]
TargetFn = Callable[[float], tuple]
Perturbation = Callable[[Point2, int, PotentialField, Point2], tuple]


def exact_estimator(p, t):
    return (p[0], p[1]), False


def initial_mode(field: PotentialField, p) -> int:
    """Mode with the smaller potential at ``p``; ties go to mode 1."""
    return 1 if V(field, 1, p) <= V(field, 2, p) else 2


def simulate(field: PotentialField, params: ControllerParams, p_init, q_init: int | None = None,
             estimator: Estimator | None = None, target_fn: TargetFn | None = None,
             perturb: Perturbation | None = None) -> HybridArc:
    """Run the closed loop from ``p_init`` until convergence or a limit.

    Parameters
    ----------
    estimator : callable ``(p, t) -> (est, dropped)``
        Perception channel.  Defaults to exact state feedback.
    target_fn : callable ``(t) -> (target, settled)``
        Moving target.  The field is rebuilt around the returned point; a run
        only counts as converged once ``settled`` is true.  Called once per
        sample, after the estimator (except at t=0, where the initial mode
        needs the field first).
    perturb : callable ``(p, q, field, est) -> e``
        Additive perturbation applied to the estimate (adversarial demos).

    Raises
    ------
    ZenoGuard
        When the jump count reaches ``params.j_max``.
    LeftDomain
        When the supervisor halts.
    """
    if not params.k > 0.0:
        raise ValueError("simulate needs a positive gain k")
    estimator = estimator or exact_estimator
    p = as_point(p_init)
    settled = True
    if target_fn is not None:
        tgt, settled = target_fn(0.0)
        field = field.with_target(tgt)
    q = initial_mode(field, p) if q_init is None else q_init
    arc = HybridArc()
    n = 0
    t = 0.0
    j = 0
    last_valid = None
    last_offset = (0.0, 0.0)
    since_jump = INF

    def held():
        if params.hold == "zero-order":
            return last_valid
        return (p[0] + last_offset[0], p[1] + last_offset[1])

    def sense():
        nonlocal last_valid, last_offset
        est, dropped = estimator(p, t)
        if dropped and last_valid is not None:
            est = held()
        if perturb is not None:
            e = perturb(p, q, field, est)
            est = (est[0] + e[0], est[1] + e[1])
        if field.covering.in_closure_O(est):
            last_valid = est
            last_offset = (est[0] - p[0], est[1] - p[1])
        elif params.on_invalid_estimate == "hold" and last_valid is not None:
            est, dropped = held(), True
        return est, dropped

    def record(event):
        arc.append(t, j, p, q, est, V(field, 1, p), V(field, 2, p), event, field.target)

    est, dropped = sense()
    record(DROPOUT if dropped else FLOW)
    while True:
        if settled and math.hypot(p[0] - field.target[0], p[1] - field.target[1]) <= params.delta:
            arc.status = "converged"
            return arc
        if t >= params.t_max - 1e-12:
            arc.status = "t_max"
            return arc
        action = supervise(field, HybridState(p, q), est, params, since_jump)
        if action == HALT:
            arc.status = "left_domain"
            arc.message = f"estimate {tuple(est)} left C ∪ D at t={t:g}"
            raise LeftDomain(arc.message, arc)
        if action == JUMP:
            q = 3 - q
            j += 1
            since_jump = 0.0
            record(JUMP)
            if j >= params.j_max:
                arc.status = "zeno"
                arc.message = f"jump count reached j_max={params.j_max} at t={t:g}"
                raise ZenoGuard(arc.message, arc)
            continue
        p = flow_step(HybridState(p, q), est, field, params).p
        n += 1
        t = n * params.h
        since_jump += params.h
        est, dropped = sense()
        if target_fn is not None:
            tgt, settled = target_fn(t)
            if tgt != tuple(field.target):
                field = field.with_target(tgt)
        record(DROPOUT if dropped else FLOW)


def lyapunov_trace(arc: HybridArc, field: PotentialField) -> np.ndarray:
    """Rows ``(t, j, V_q(p))`` with ``q`` the active mode at each sample."""
    out = np.empty((len(arc), 3))
    for i in range(len(arc)):
        f = field
        if arc.target_x and not math.isnan(arc.target_x[i]):
            tgt = (arc.target_x[i], arc.target_y[i])
            if tgt != tuple(field.target):
                f = field.with_target(tgt)
        out[i] = (arc.t[i], arc.j[i], V(f, arc.q[i], (arc.x[i], arc.y[i])))
    return out


@dataclass
class LyapunovReport:
    flow_violations: int
    jump_violations: int
    worst_flow_increase: float
    worst_jump_ratio: float
    n_flow_steps: int
    n_jumps: int

    @property
    def passed(self) -> bool:
        return self.flow_violations == 0 and self.jump_violations == 0


def check_lyapunov(arc: HybridArc, field: PotentialField, params: ControllerParams,
                   flow_tol: float | None = None, jump_tol: float = 1e-12) -> LyapunovReport:
    """Check flow monotonicity and jump contraction of the active potential.

    A flow step may raise V by at most ``flow_tol`` (default ``1e-9 * h``); a
    jump must give ``V_new <= V_old / (chi - lam) + jump_tol``.
    """
    if flow_tol is None:
        flow_tol = 1e-9 * params.h
    tr = lyapunov_trace(arc, field)
    fv = jv = nf = nj = 0
    worst_inc = -INF
    worst_ratio = 0.0
    for i in range(1, len(tr)):
        v_old, v_new = tr[i - 1, 2], tr[i, 2]
        if arc.event[i] == JUMP:
            nj += 1
            bound = v_old / (params.chi - params.lam)
            worst_ratio = max(worst_ratio, v_new / v_old if v_old > 0 else 0.0)
            if not v_new <= bound + jump_tol:
                jv += 1
        else:
            nf += 1
            inc = v_new - v_old
            worst_inc = max(worst_inc, inc)
            if not inc <= flow_tol:
                fv += 1
    return LyapunovReport(fv, jv, worst_inc, worst_ratio, nf, nj)
