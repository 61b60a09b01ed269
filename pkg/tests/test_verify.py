from dataclasses import replace

from hybridnav.scenarios import builtin_scenario
from hybridnav.verify import Check, geometry_suite, lyapunov_suite, nominal_inits, run_suites


def test_check_margin_and_line():
    c = Check("s", "n", True, 1.0, 3.0)
    assert c.margin == 2.0 and c.line().startswith("[PASS] s/n")
    assert Check("s", "n", False, 4.0, 3.0).line().startswith("[FAIL]")


def test_geometry_suite_unit_world(unit_cov):
    checks = geometry_suite(unit_cov, 2000)
    assert all(c.passed for c in checks)
    assert checks[0].detail["inscribed_radius"] == 2.0


def test_lyapunov_suite_nominal():
    s = builtin_scenario("nominal")
    checks = lyapunov_suite(s, n_runs=6)
    assert all(c.passed for c in checks), [c.to_dict() for c in checks]


def test_nominal_inits_in_domain(noisy_dropout):
    cov = noisy_dropout.covering()
    pts = nominal_inits(cov, noisy_dropout.perception.region, 50, 0)
    assert len(pts) == 50
    assert not any(cov.in_diamond(p) for p in pts)


def test_run_suites_rejects_unknown(noisy_dropout):
    import pytest
    with pytest.raises(ValueError):
        run_suites(noisy_dropout, ["nonsense"])


def test_lyapunov_suite_uses_exact_perception(noisy_dropout):
    checks = run_suites(replace(noisy_dropout), ["lyapunov"], n_runs=3)
    assert all(c.passed for c in checks)
