"""Acceptance criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the report lines;
they are also printed (uncaptured) under a plain ``pytest`` run.
"""

import time

import numpy as np
import pytest

from hybridnav.baseline import NavigationFunction, demo_stuck
from hybridnav.cli import DEFAULT_ADVERSARIAL
from hybridnav.engine import ControllerParams
from hybridnav.geometry import Obstacle
from hybridnav.scenarios import builtin_scenario, run_scenario, with_seed
from hybridnav.verify import coverage_suite, geometry_suite, gradient_suite, lyapunov_suite

N_SEEDS = 100
TERMINAL = ("converged", "t_max")


@pytest.fixture
def report(capsys):
    def emit(number, name, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number} {name}: {detail}")
        return passed
    return emit


@pytest.fixture(scope="module")
def sweep():
    base = builtin_scenario("noisy_dropout")
    t0 = time.perf_counter()
    results = [r for seed in range(N_SEEDS) for r in run_scenario(with_seed(base, seed))]
    return results, time.perf_counter() - t0


@pytest.fixture(scope="module")
def demo():
    a = DEFAULT_ADVERSARIAL
    nav = NavigationFunction(a["target"], Obstacle(a["obstacle"]["center"], a["obstacle"]["radius"]),
                             a["beta"], a["rho_b"])
    params = ControllerParams(k=a["k"], h=a["h"], delta=a["delta"], t_max=a["t_end"])
    t0 = time.perf_counter()
    result = demo_stuck(nav, a["budget"], a["t_end"], None, params, a["rho_b"],
                        m_dirs=a["m_dirs"], engagement=a["engagement"])
    return result, time.perf_counter() - t0, nav


@pytest.fixture(scope="module")
def lyapunov():
    return lyapunov_suite(builtin_scenario("nominal"), n_runs=20)


def test_1_noisy_dropout_sweep(sweep, report):
    results, elapsed = sweep
    rho = builtin_scenario("noisy_dropout").world.obstacle.radius
    n = len(results)
    rate = sum(r.converged for r in results) / n
    clear = sum(r.min_obstacle_clearance >= 0.0 for r in results) / n
    worst = min(r.min_obstacle_clearance for r in results)
    ok = rate >= 0.95 and clear == 1.0 and elapsed < 60.0
    assert report(1, "noisy_dropout sweep", ok,
                  f"runs={n} converged={rate:.3f} (>=0.95) clearance_ok={clear:.3f} (=1) "
                  f"min |p-p0|-rho={worst:.3f} m (rho={rho}) runtime={elapsed:.1f}s (<60)")


def test_2_lyapunov_suite(lyapunov, report):
    flow, jump = lyapunov[0], lyapunov[1]
    ok = flow.passed and jump.passed
    assert report(2, "lyapunov", ok,
                  f"runs=20 flow_violations={flow.detail['violations']} jump_violations={jump.detail['violations']} "
                  f"worst_flow_increase={flow.measured:.3g} (<= {flow.bound:.3g}) "
                  f"worst_jump_ratio={jump.measured:.4g} (<= {jump.bound:.4g})")


def test_3_coverage_bound(report):
    s = builtin_scenario("noisy_dropout")
    t0 = time.perf_counter()
    (c,) = coverage_suite(s, n_samples=10_000, spacing=1.0)
    elapsed = time.perf_counter() - t0
    ok = c.passed and c.detail["n_samples"] == 10_000 and elapsed < 30.0
    assert report(3, "coverage bound", ok,
                  f"samples={c.detail['n_samples']} max_error={c.measured:.4f} eps*={c.bound:.4f} "
                  f"runtime={elapsed:.1f}s (<30)")


def test_4_gradient(report):
    checks = gradient_suite(builtin_scenario("noisy_dropout").field(), n=1000, step=1e-5, tol=1e-5)
    ok = all(c.passed for c in checks) and all(c.detail["n_points"] == 1000 for c in checks)
    assert report(4, "gradient", ok, " ".join(
        f"q{q}: worst_rel={c.measured:.3g} n={c.detail['n_points']}" for q, c in zip((1, 2), checks)) + " (<1e-5)")


def test_5_adversarial_contrast(demo, report):
    result, elapsed, nav = demo
    smooth_d = float(np.linalg.norm(result.smooth.positions[-1] - np.array(nav.target)))
    hybrid_d = float(np.linalg.norm(result.hybrid.positions[-1] - np.array(nav.target)))
    ok = (smooth_d > 5.0 and result.hybrid.converged and hybrid_d <= DEFAULT_ADVERSARIAL["delta"]
          and result.max_disturbance <= 0.1 + 1e-12 and elapsed < 10.0)
    assert report(5, "adversarial contrast", ok,
                  f"smooth_final={smooth_d:.3f} m (>5) hybrid_final={hybrid_d:.3f} m (<=0.5) "
                  f"|e|max={result.max_disturbance:.3f} (<=0.1) runtime={elapsed:.2f}s (<10)")


def test_6_completeness(sweep, lyapunov, demo, report):
    results, _ = sweep
    arcs = [r.arc for r in results] + [demo[0].hybrid]
    statuses = {a.status for a in arcs}
    max_j = max(a.jumps for a in arcs)
    ok = statuses <= set(TERMINAL) and max_j <= 10 and lyapunov[2].passed and lyapunov[3].passed
    assert report(6, "completeness", ok,
                  f"statuses={sorted(statuses)} max_jumps={max(max_j, int(lyapunov[3].measured))} (<=10) "
                  f"lyapunov_runs_terminal={lyapunov[2].passed}")


def test_7_determinism(tmp_path, report):
    s = with_seed(builtin_scenario("noisy_dropout"), 7)
    blobs = []
    for rep in range(2):
        for r in run_scenario(s):
            path = tmp_path / f"{rep}_{r.index}.csv"
            r.arc.write_csv(path)
            blobs.append(path.read_bytes())
    half = len(blobs) // 2
    ok = blobs[:half] == blobs[half:]
    assert report(7, "determinism", ok, f"files={half} byte_identical={ok}")


def test_8_geometry(report):
    checks = geometry_suite(builtin_scenario("noisy_dropout").covering(), n=10_000)
    ok = all(c.passed for c in checks)
    d = checks[0].detail["inscribed_radius"]
    assert report(8, "geometry", ok,
                  f"inscribed_radius={d:.12g} (2rho=8) target_in_both={checks[1].passed} "
                  f"obstacle_hits={int(checks[2].measured)}/10000")
