"""Declarative experiments: worlds, perception setups, error models, targets.

A scenario is a JSON document (``schema_version`` 1) describing one world
and a list of initial conditions.  :func:`run_scenario` returns one
:class:`RunResult` per initial condition; every run draws from its own
random stream ``default_rng([seed, index])``.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .engine import ControllerParams, HybridArc, simulate
from .errors import ConfigError, HybridNavError, SimulationError
from .geometry import Covering, Point2, as_point, build_covering
from .perception import (Camera, ErrorModel, PerceptionMap, World, collect_training_data,
                         default_camera, fit, render_many)
from .potentials import PotentialField

SCHEMA_VERSION = 1

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_rect = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "world", "initial_conditions"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "world": {
            "type": "object", "additionalProperties": False, "required": ["obstacle", "target"],
            "properties": {
                "obstacle": {"type": "object", "additionalProperties": False,
                             "required": ["center", "radius"],
                             "properties": {"center": _point, "radius": {"type": "number", "exclusiveMinimum": 0}}},
                "target": _point,
                "target_margin": {"type": "number", "minimum": 0},
            },
        },
        "barrier": {"type": "object", "additionalProperties": False,
                    "properties": {"rho_b": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}},
        "controller": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "k": {"type": "number", "exclusiveMinimum": 0},
                "chi": {"type": "number"}, "lam": {"type": "number"},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "j_max": {"type": "integer", "minimum": 1},
                "dwell": {"type": "number", "minimum": 0},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "substep_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "on_invalid_estimate": {"enum": ["hold", "halt"]},
                "hold": {"enum": ["predict", "zero-order"]},
            },
        },
        "perception": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["exact", "1nn", "local-linear"]},
                "region": _rect,
                "spacing": {"type": "number", "exclusiveMinimum": 0},
                "resolution": {"type": "array", "items": {"type": "integer", "minimum": 1},
                               "minItems": 2, "maxItems": 2},
                "margin": {"type": "number", "minimum": 0},
                "train_occlusions": {"type": "array", "items": _rect},
            },
        },
        "errors": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "sigma": {"type": "number", "minimum": 0},
                "dropout": {"type": "number", "minimum": 0, "maximum": 1},
                "occlusions": {"type": "array", "items": _rect},
            },
        },
        "initial_conditions": {"type": "array", "items": _point, "minItems": 1},
        "initial_modes": {"type": "array", "items": {"enum": [1, 2, None]}},
        "target_provider": {
            "type": "object", "additionalProperties": False, "required": ["mode"],
            "properties": {
                "mode": {"enum": ["static", "waypoints", "leader"]},
                "path": {"type": "array", "items": _point, "minItems": 1},
                "speed": {"type": "number", "exclusiveMinimum": 0},
                "init": _point,
                "k": {"type": "number", "exclusiveMinimum": 0},
                "window": _rect,
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


@dataclass(frozen=True)
class PerceptionConfig:
    mode: str = "exact"
    region: tuple = (-40.0, 25.0, -20.0, 16.0)
    spacing: float = 1.0
    resolution: tuple = (25, 15)
    margin: float = 5.0
    train_occlusions: tuple = ()

    def camera(self) -> Camera:
        return default_camera(self.region, self.margin, self.resolution).with_occlusions(self.train_occlusions)


@dataclass(frozen=True)
class TargetProvider:
    """Where the controller is attracted to over time.

    ``static``: the world target.  ``waypoints``: a point moving along
    ``path`` at ``speed``.  ``leader``: the perceived position of a leader
    that either moves along ``path`` at ``speed`` or runs its own hybrid
    controller from ``init`` with gain ``k``.  ``window`` bounds every
    provided target (defaults to the perception region).
    """

    mode: str = "static"
    path: tuple = ()
    speed: float = 0.1
    init: tuple | None = None
    k: float | None = None
    window: tuple | None = None


@dataclass(frozen=True)
class Scenario:
    world: World
    initial_conditions: tuple
    name: str = "scenario"
    target_margin: float = 0.5
    rho_b: float = 1.0
    controller: ControllerParams = ControllerParams()
    perception: PerceptionConfig = PerceptionConfig()
    errors: ErrorModel = ErrorModel()
    initial_modes: tuple = ()
    target_provider: TargetProvider = TargetProvider()
    seed: int = 0

    def covering(self) -> Covering:
        w = self.world
        return build_covering(w.obstacle.center, w.obstacle.radius, w.target, self.target_margin)

    def field(self) -> PotentialField:
        return PotentialField.for_covering(self.covering(), self.rho_b)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        try:
            jsonschema.validate(doc, SCENARIO_SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path)
            raise ConfigError(f"scenario invalid at '{path}': {exc.message}") from None
        w = doc["world"]
        from .geometry import Obstacle
        world = World(Obstacle(as_point(w["obstacle"]["center"]), w["obstacle"]["radius"]), w["target"])
        try:
            controller = ControllerParams(**doc.get("controller", {}))
            errors = ErrorModel(**{k: (tuple(map(tuple, v)) if k == "occlusions" else v)
                                   for k, v in doc.get("errors", {}).items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid parameters: {exc}") from None
        pd = dict(doc.get("perception", {}))
        for key in ("region", "resolution"):
            if key in pd:
                pd[key] = tuple(pd[key])
        if "train_occlusions" in pd:
            pd["train_occlusions"] = tuple(tuple(r) for r in pd["train_occlusions"])
        tp = dict(doc.get("target_provider", {"mode": "static"}))
        if "path" in tp:
            tp["path"] = tuple(tuple(p) for p in tp["path"])
        for key in ("init", "window"):
            if key in tp:
                tp[key] = tuple(tp[key])
        s = cls(world=world,
                initial_conditions=tuple(tuple(p) for p in doc["initial_conditions"]),
                name=doc.get("name", "scenario"),
                target_margin=w.get("target_margin", 0.5),
                rho_b=doc.get("barrier", {}).get("rho_b", 1.0),
                controller=controller,
                perception=PerceptionConfig(**pd),
                errors=errors,
                initial_modes=tuple(doc.get("initial_modes", ())),
                target_provider=TargetProvider(**tp),
                seed=doc.get("seed", 0))
        try:
            s.covering()
        except HybridNavError as exc:
            raise ConfigError(str(exc)) from None
        s.check_target_window()
        return s

    def check_target_window(self) -> None:
        """Every provided target point must stay inside the target window."""
        tp = self.target_provider
        if tp.mode == "leader" and not tp.path and tp.init is None:
            raise ConfigError("leader mode needs either 'path' or 'init'")
        if tp.mode == "waypoints" and not tp.path:
            raise ConfigError("waypoints mode needs a 'path'")
        xmin, xmax, ymin, ymax = tp.window or self.perception.region
        pts = list(tp.path) + ([tp.init] if tp.init is not None else []) + [self.world.target]
        for x, y in pts:
            if not (xmin <= x <= xmax and ymin <= y <= ymax):
                raise ConfigError(f"target point ({x}, {y}) lies outside the target window")

    def to_dict(self) -> dict:
        c = asdict(self.controller)
        c.pop("max_substep")
        c.pop("min_substep")
        tp = {k: v for k, v in asdict(self.target_provider).items() if v not in (None, ())}
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "world": {"obstacle": {"center": list(self.world.obstacle.center),
                                   "radius": self.world.obstacle.radius},
                      "target": list(self.world.target), "target_margin": self.target_margin},
            "barrier": {"rho_b": self.rho_b},
            "controller": c,
            "perception": {"mode": self.perception.mode, "region": list(self.perception.region),
                           "spacing": self.perception.spacing, "resolution": list(self.perception.resolution),
                           "margin": self.perception.margin,
                           "train_occlusions": [list(r) for r in self.perception.train_occlusions]},
            "errors": {"sigma": self.errors.sigma, "dropout": self.errors.dropout,
                       "occlusions": [list(r) for r in self.errors.occlusions]},
            "initial_conditions": [list(p) for p in self.initial_conditions],
            **({"initial_modes": list(self.initial_modes)} if self.initial_modes else {}),
            "target_provider": {k: (json.loads(json.dumps(v))) for k, v in tp.items()},
            "seed": self.seed,
        }


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    return Scenario.from_dict(doc)


def builtin_scenario(name: str) -> Scenario:
    """Load one of the shipped scenario files (``noisy_dropout``, ``occlusion``, ...)."""
    ref = resources.files("hybridnav") / "data" / "scenarios" / f"{name}.json"
    return Scenario.from_dict(json.loads(ref.read_text()))


def builtin_names() -> list[str]:
    ref = resources.files("hybridnav") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in ref.iterdir() if p.name.endswith(".json"))


# perception cache ----------------------------------------------------------

_MAP_CACHE: dict = {}


def perception_map(scenario: Scenario) -> PerceptionMap | None:
    """Fit (once per world + perception config) the scenario's perception map."""
    pc = scenario.perception
    if pc.mode == "exact":
        return None
    key = (scenario.world, pc)
    if key not in _MAP_CACHE:
        T = collect_training_data(scenario.world, pc.region, pc.spacing, pc.camera())
        _MAP_CACHE[key] = fit(T, pc.mode)
    return _MAP_CACHE[key]


# targets -------------------------------------------------------------------

class WaypointTarget:
    def __init__(self, path, speed: float):
        self.path = [as_point(p) for p in path]
        self.speed = speed
        seg = [math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(self.path, self.path[1:])]
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, t: float):
        s = self.speed * t
        if s >= self.cum[-1]:
            return self.path[-1], True
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        a, b = self.path[i], self.path[i + 1]
        f = (s - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        return Point2(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)), False


class LeaderTarget:
    """Follower-side view of a recorded leader arc.

    The leader is observed through the follower's camera and perception
    map; frames the follower drops reuse the previous perceived position.
    """

    def __init__(self, leader: HybridArc, h: float, pmap: PerceptionMap | None, camera: Camera | None,
                 sensor=None):
        self.leader = leader
        self.h = h
        self.pmap = pmap
        self.camera = camera
        self.sensor = sensor
        self.prev = None
        flows = [i for i, ev in enumerate(leader.event) if ev != "jump"]
        self.flow_index = flows
        self.t_end = leader.t[-1]

    def true_position(self, t: float) -> Point2:
        n = min(int(round(t / self.h)), len(self.flow_index) - 1)
        i = self.flow_index[n]
        return Point2(self.leader.x[i], self.leader.y[i])

    def __call__(self, t: float):
        p = self.true_position(t)
        dropped = self.sensor is not None and self.sensor.last_dropped
        if self.prev is not None and dropped:
            seen = self.prev
        elif self.pmap is None:
            seen = p
        else:
            x, y = self.pmap.predict_many(render_many(self.pmap.world, self.camera, [p]))[0]
            seen = Point2(float(x), float(y))
        self.prev = seen
        return seen, t >= self.t_end


class _Sensor:
    # Estimator wrapper that remembers whether the last frame was dropped.
    def __init__(self, estimator):
        self.estimator = estimator
        self.last_dropped = False

    def __call__(self, p, t):
        est, dropped = self.estimator(p, t)
        self.last_dropped = dropped
        return est, dropped


# runs ----------------------------------------------------------------------

@dataclass
class RunResult:
    index: int
    init: tuple
    arc: HybridArc = field(repr=False)
    status: str
    converged: bool
    time_to_converge: float
    jump_count: int
    min_obstacle_clearance: float
    max_perception_error: float
    error: str = ""
    leader: HybridArc | None = field(default=None, repr=False)

    def summary(self) -> dict:
        extra = {}
        if self.leader is not None:
            extra["leader_max_speed"] = leader_max_speed(self.leader)
            extra["tracking_error_tail"] = follower_tracking_error(self)
        return {**extra, "index": self.index, "init": list(self.init), "status": self.status,
                "converged": self.converged, "time_to_converge": self.time_to_converge,
                "jump_count": self.jump_count, "min_obstacle_clearance": self.min_obstacle_clearance,
                "max_perception_error": self.max_perception_error, "error": self.error,
                "samples": len(self.arc)}


def metrics(arc: HybridArc, obstacle, delta: float) -> dict:
    """Summary numbers computed from the true positions of an arc."""
    if len(arc) == 0:
        return {"converged": False, "time_to_converge": math.inf, "jump_count": 0,
                "min_obstacle_clearance": math.nan, "max_perception_error": math.nan}
    pos = arc.positions
    est = arc.estimates
    c = obstacle.center
    clearance = float(np.min(np.hypot(pos[:, 0] - c.x, pos[:, 1] - c.y)) - obstacle.radius)
    conv = arc.status == "converged"
    # the engine stops at the first sample inside the ball once the target settled
    ttc = float(arc.t[-1]) if conv else math.inf
    fresh = np.array([ev != "dropout" for ev in arc.event])
    perr = np.hypot(est[:, 0] - pos[:, 0], est[:, 1] - pos[:, 1])
    return {"converged": conv, "time_to_converge": ttc, "jump_count": int(arc.jumps),
            "min_obstacle_clearance": clearance,
            "max_perception_error": float(perr[fresh].max()) if fresh.any() else 0.0}


def _leader_arc(scenario: Scenario, field: PotentialField) -> HybridArc:
    """Leader trajectory: a kinematic path follower if ``path`` is given,
    otherwise a hybrid run from ``init`` with exact perception."""
    tp = scenario.target_provider
    if tp.path:
        h = scenario.controller.h
        wp = WaypointTarget(tp.path, tp.speed)
        arc = HybridArc()
        n = 0
        while True:
            p, done = wp(n * h)
            arc.append(n * h, 0, p, 0, p, math.nan, math.nan, "flow", p)
            if done:
                break
            n += 1
        arc.status = "converged"
        return arc
    params = scenario.controller if tp.k is None else replace(scenario.controller, k=tp.k)
    try:
        return simulate(field, params, tp.init)
    except SimulationError as exc:
        return exc.arc


def _run_one(scenario: Scenario, index: int, pmap: PerceptionMap | None, leader: HybridArc | None) -> RunResult:
    from .perception import Estimator
    field = scenario.field()
    init = scenario.initial_conditions[index]
    q0 = scenario.initial_modes[index] if index < len(scenario.initial_modes) else None
    rng = np.random.default_rng([scenario.seed, index])
    estimator = _Sensor(Estimator(pmap, scenario.errors, scenario.world, rng))
    tp = scenario.target_provider
    target_fn = None
    if tp.mode == "waypoints":
        target_fn = WaypointTarget(tp.path, tp.speed)
    elif tp.mode == "leader":
        cam = pmap.camera.with_occlusions(scenario.errors.occlusions) if pmap is not None else None
        target_fn = LeaderTarget(leader, scenario.controller.h, pmap, cam, estimator)
    error = ""
    try:
        arc = simulate(field, scenario.controller, init, q0, estimator, target_fn)
    except SimulationError as exc:
        arc, error = exc.arc, f"{type(exc).__name__}: {exc}"
    except HybridNavError as exc:
        arc, error = HybridArc(status="error"), f"{type(exc).__name__}: {exc}"
    m = metrics(arc, scenario.world.obstacle, scenario.controller.delta)
    return RunResult(index, tuple(init), arc, arc.status, m["converged"], m["time_to_converge"],
                     m["jump_count"], m["min_obstacle_clearance"], m["max_perception_error"], error, leader)


_WORKER: dict = {}


def _worker_init(scenario, pmap, leader):
    _WORKER.update(scenario=scenario, pmap=pmap, leader=leader)


def _worker_run(index):
    return _run_one(_WORKER["scenario"], index, _WORKER["pmap"], _WORKER["leader"])


def run_scenario(scenario: Scenario, workers: int = 1) -> list[RunResult]:
    """One result per initial condition, ordered by index.

    Engine errors are captured per run (``status``/``error``) rather than
    aborting the batch.
    """
    pmap = perception_map(scenario)
    leader = None
    if scenario.target_provider.mode == "leader":
        leader = _leader_arc(scenario, scenario.field())
    n = len(scenario.initial_conditions)
    if workers <= 1 or n == 1:
        return [_run_one(scenario, i, pmap, leader) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                             initargs=(scenario, pmap, leader)) as ex:
        return list(ex.map(_worker_run, range(n)))


def with_seed(scenario: Scenario, seed: int) -> Scenario:
    return replace(scenario, seed=int(seed))


def follower_tracking_error(result: RunResult, tail: float = 0.2) -> float:
    """Max follower-to-target distance over the last ``tail`` fraction of the run."""
    arc = result.arc
    pos, tgt = arc.positions, arc.targets
    n0 = int(math.floor(len(arc) * (1.0 - tail)))
    return float(np.max(np.hypot(pos[n0:, 0] - tgt[n0:, 0], pos[n0:, 1] - tgt[n0:, 1])))


def leader_max_speed(leader: HybridArc) -> float:
    """Largest per-sample speed along a leader arc."""
    pos = leader.positions
    t = np.asarray(leader.t)
    if len(t) < 2:
        return 0.0
    dt = np.diff(t)
    ok = dt > 0
    step = np.hypot(*np.diff(pos, axis=0).T)
    return float(np.max(step[ok] / dt[ok])) if ok.any() else 0.0


def occlusion_pair(scenario: Scenario) -> dict[str, list[RunResult]]:
    """Paired occlusion experiment on the same seed.

    ``clear``: no occlusion anywhere.  ``occluded``: map trained without
    occlusion, runtime occlusion rectangles on.  ``retrained``: the map is
    trained with the same rectangles hidden.
    """
    rects = scenario.errors.occlusions
    clear = replace(scenario, errors=replace(scenario.errors, occlusions=()),
                    perception=replace(scenario.perception, train_occlusions=()))
    occluded = replace(clear, errors=scenario.errors)
    retrained = replace(occluded, perception=replace(scenario.perception, train_occlusions=tuple(rects)))
    return {"clear": run_scenario(clear), "occluded": run_scenario(occluded),
            "retrained": run_scenario(retrained)}
