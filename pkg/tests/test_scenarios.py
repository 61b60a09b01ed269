import json
import math
from dataclasses import replace

import numpy as np
import pytest

from hybridnav.engine import HybridArc
from hybridnav.errors import ConfigError
from hybridnav.geometry import Obstacle
from hybridnav.perception import ErrorModel
from hybridnav.scenarios import (Scenario, TargetProvider, WaypointTarget, builtin_names, builtin_scenario,
                                 follower_tracking_error, leader_max_speed, load_scenario, metrics,
                                 occlusion_pair, run_scenario, with_seed)


def test_shipped_scenarios_load():
    names = builtin_names()
    for n in ("noisy_dropout", "nominal", "occlusion", "leader_follower"):
        assert n in names
        s = builtin_scenario(n)
        assert s.name == n


def test_noisy_dropout_both_inits_converge(noisy_dropout):
    assert noisy_dropout.initial_conditions == ((-12.0, 2.0), (-37.0, -17.0))
    assert (noisy_dropout.controller.chi, noisy_dropout.controller.lam) == (1.1, 0.09)
    assert (noisy_dropout.errors.sigma, noisy_dropout.errors.dropout) == (0.5, 0.5)
    results = run_scenario(noisy_dropout)
    assert [r.index for r in results] == [0, 1]
    for r in results:
        assert r.converged and r.min_obstacle_clearance > 0.0 and r.error == ""


def test_static_zero_noise_from_target_converges_at_zero():
    s = builtin_scenario("nominal")
    s = replace(s, initial_conditions=((20.0, 0.0),))
    (r,) = run_scenario(s)
    assert r.converged and r.time_to_converge == 0.0 and r.jump_count == 0


def test_batch_is_deterministic_and_worker_independent(noisy_dropout):
    a = run_scenario(noisy_dropout)
    b = run_scenario(noisy_dropout)
    c = run_scenario(noisy_dropout, workers=2)
    for x, y, z in zip(a, b, c):
        assert x.arc.x == y.arc.x == z.arc.x
        assert x.arc.est_y == y.arc.est_y == z.arc.est_y
        assert x.summary() == y.summary() == z.summary()


def test_seeds_change_noise(noisy_dropout):
    a = run_scenario(with_seed(noisy_dropout, 0))[0]
    b = run_scenario(with_seed(noisy_dropout, 1))[0]
    assert a.arc.est_x != b.arc.est_x


def test_occlusion_pair_inflates_error():
    s = builtin_scenario("occlusion")
    pair = occlusion_pair(s)
    for clear, occl, retr in zip(pair["clear"], pair["occluded"], pair["retrained"]):
        assert occl.converged and clear.converged and retr.converged
        assert occl.max_perception_error > clear.max_perception_error
        assert occl.min_obstacle_clearance > 0.0


def test_metrics_constant_arc_at_target():
    arc = HybridArc()
    arc.append(0.0, 0, (20.0, 0.0), 1, (20.0, 0.0), 0.0, 0.0, "flow", (20.0, 0.0))
    arc.status = "converged"
    m = metrics(arc, Obstacle((0.0, 0.0), 4.0), 0.5)
    assert m["time_to_converge"] == 0.0 and m["jump_count"] == 0
    assert m["max_perception_error"] == 0.0


def test_metrics_touching_obstacle_is_zero_clearance():
    arc = HybridArc()
    arc.append(0.0, 0, (4.0, 0.0), 1, (4.0, 0.0), 0.0, 0.0, "flow", (20.0, 0.0))
    arc.append(0.01, 0, (10.0, 0.0), 1, (10.0, 0.0), 0.0, 0.0, "flow", (20.0, 0.0))
    arc.status = "t_max"
    m = metrics(arc, Obstacle((0.0, 0.0), 4.0), 0.5)
    assert m["min_obstacle_clearance"] == 0.0
    assert m["time_to_converge"] == math.inf and not m["converged"]


def test_metrics_use_true_positions_not_estimates():
    arc = HybridArc()
    arc.append(0.0, 0, (10.0, 0.0), 1, (1.0, 0.0), 0.0, 0.0, "flow", (20.0, 0.0))
    arc.status = "t_max"
    m = metrics(arc, Obstacle((0.0, 0.0), 4.0), 0.5)
    assert m["min_obstacle_clearance"] == 6.0
    assert m["max_perception_error"] == 9.0


def test_engine_errors_are_captured_per_run():
    s = builtin_scenario("nominal")
    s = replace(s, initial_conditions=((-5.0, 0.0), (-12.0, 2.0)))
    bad, good = run_scenario(s)
    assert bad.status == "left_domain" and "LeftDomain" in bad.error and not bad.converged
    assert good.converged


def test_waypoint_target_motion():
    wp = WaypointTarget([(0, 0), (3, 4), (3, 10)], 1.0)
    assert wp(0.0) == ((0.0, 0.0), False)
    p, done = wp(2.5)
    assert p == pytest.approx((1.5, 2.0)) and not done
    p, done = wp(100.0)
    assert p == (3.0, 10.0) and done


def test_waypoint_scenario_exact_perception():
    s = builtin_scenario("nominal")
    s = replace(s, initial_conditions=((-12.0, 2.0),), target_provider=TargetProvider(
        "waypoints", path=((10.0, 12.0), (20.0, 0.0)), speed=0.1))
    (r,) = run_scenario(s)
    assert r.converged
    assert r.time_to_converge >= math.hypot(10, 12) / 0.1 - 1e-9
    # the covering never moves with the target
    assert s.covering() == builtin_scenario("nominal").covering()


def test_leader_follower_tracks_slow_leader():
    s = builtin_scenario("leader_follower")
    s = replace(s, initial_conditions=s.initial_conditions[:1])
    (r,) = run_scenario(s)
    assert leader_max_speed(r.leader) <= 0.1 * s.controller.k + 1e-9
    assert r.converged and r.min_obstacle_clearance > 0.0
    assert follower_tracking_error(r) < 3.0
    assert "tracking_error_tail" in r.summary()


def test_schema_rejects_unknown_keys_and_bad_values(noisy_dropout):
    doc = noisy_dropout.to_dict()
    assert Scenario.from_dict(doc) == noisy_dropout
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "colour": "red"})
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "controller": {**doc["controller"], "lam": 0.1}})
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "world": {**doc["world"], "target": [5.0, 0.0]}})
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "schema_version": 2})
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "target_provider": {"mode": "waypoints", "path": [[100.0, 0.0]]}})
    with pytest.raises(ConfigError):
        Scenario.from_dict({**doc, "target_provider": {"mode": "leader"}})


def test_load_scenario_file(tmp_path, noisy_dropout):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(noisy_dropout.to_dict()))
    assert load_scenario(p) == noisy_dropout
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(p)
