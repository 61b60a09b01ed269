import math

import numpy as np
import pytest

from hybridnav.baseline import (Adversary, NavigationFunction, adversarial_e, demo_stuck, find_saddle,
                                nav_grad, nav_potential, simulate_smooth)
from hybridnav.engine import ControllerParams
from hybridnav.errors import InsideObstacle, NoSaddleFound
from hybridnav.geometry import Obstacle


@pytest.fixture(scope="module")
def demo_nav():
    return NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 0.2), beta=20.0, rho_b=1.0)


def test_gradient_at_target_and_far_field():
    nav = NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 1.0), beta=1.0)
    assert np.allclose(nav_grad(nav, (10.0, 0.0)), 0.0)
    far = (30.0, 20.0)
    g = nav_grad(nav, far)
    assert np.allclose(g, -2 * (np.array(far) - [10.0, 0.0]))
    assert nav_potential(nav, (10.0, 0.0)) == 0.0


def test_inside_obstacle_raises():
    nav = NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 1.0))
    with pytest.raises(InsideObstacle):
        nav.grad((0.5, 0.0))


def test_saddle_example_unit_obstacle():
    nav = NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 1.0), beta=1.0, rho_b=1.0)
    s = find_saddle(nav)
    assert s.x < -1.0 and s.y == 0.0
    assert np.linalg.norm(nav.grad(s)) < 1e-8
    ev = np.linalg.eigvalsh(nav.hessian(s))
    assert ev[0] < 0 < ev[1]


def test_hessian_matches_finite_difference(demo_nav):
    p = np.array([-0.9, 0.3])
    h = 1e-6
    fd = np.column_stack([(demo_nav.grad(p + e) - demo_nav.grad(p - e)) / (2 * h) for e in np.eye(2) * h])
    assert np.allclose(demo_nav.hessian(p), fd, rtol=1e-5, atol=1e-5)


def test_saddle_certificate_with_fd_hessian(demo_nav):
    s = np.array(find_saddle(demo_nav))
    assert np.linalg.norm(demo_nav.grad(s)) < 1e-8
    h = 1e-6
    fd = np.column_stack([(demo_nav.grad(s + e) - demo_nav.grad(s - e)) / (2 * h) for e in np.eye(2) * h])
    ev = np.linalg.eigvalsh(0.5 * (fd + fd.T))
    assert ev[0] < 0 < ev[1]


def test_no_saddle_without_repulsion():
    nav = NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 1.0), beta=0.0)
    with pytest.raises(NoSaddleFound):
        find_saddle(nav)


def test_adversary_budget_and_engagement(demo_nav):
    s = find_saddle(demo_nav)
    assert adversarial_e(s, demo_nav, s, 0.0).tolist() == [0.0, 0.0]
    assert adversarial_e((5.0, 5.0), demo_nav, s, 0.1).tolist() == [0.0, 0.0]
    e = adversarial_e(s, demo_nav, s, 0.1)
    assert np.linalg.norm(e) <= 0.1 + 1e-15
    adv = Adversary(demo_nav, s, 0.1)
    rng = np.random.default_rng(0)
    for p in np.array(s) + rng.uniform(-0.5, 0.5, size=(200, 2)):
        if math.hypot(*p) <= 0.25:
            continue
        assert math.hypot(*adv.smooth(p)) <= 0.1 + 1e-15
    assert adv.emitted_max <= 0.1 + 1e-15


def test_demo_contrast(demo_nav):
    res = demo_stuck(demo_nav, 0.1, t_end=50.0)
    s = res.summary()
    assert s["smooth"]["final_distance"] > 5.0
    assert s["smooth"]["max_saddle_distance"] <= 1.0
    assert s["smooth"]["stuck_duration"] == pytest.approx(50.0)
    assert res.hybrid.status == "converged"
    assert s["hybrid"]["final_distance"] <= 0.5
    assert res.max_disturbance <= 0.1 + 1e-15


def test_demo_is_deterministic(demo_nav):
    a = demo_stuck(demo_nav, 0.1, t_end=5.0)
    b = demo_stuck(demo_nav, 0.1, t_end=5.0)
    assert a.smooth.x == b.smooth.x and a.hybrid.x == b.hybrid.x


def test_zero_budget_smooth_converges_off_the_ray(demo_nav):
    s = find_saddle(demo_nav)
    res = demo_stuck(demo_nav, 0.0, t_end=50.0, p_init=(s.x, s.y + 0.05))
    assert res.summary()["budget_zero"]
    assert res.smooth.status == "converged"
    assert res.hybrid.status == "converged"
    assert res.max_disturbance == 0.0


def test_init_at_target_both_converge(demo_nav):
    res = demo_stuck(demo_nav, 0.1, t_end=5.0, p_init=(10.0, 0.0))
    assert len(res.smooth) == 1 and res.smooth.status == "converged"
    assert len(res.hybrid) == 1 and res.hybrid.status == "converged"


def test_smooth_without_disturbance_matches_ascent():
    nav = NavigationFunction((10.0, 0.0), Obstacle((0.0, 0.0), 1.0), beta=1.0)
    arc = simulate_smooth(nav, (20.0, 5.0), 10.0, delta=0.5)
    assert arc.status == "converged"
    assert all(math.isnan(v) for v in arc.V2) and set(arc.q) == {0}
