"""Command-line front end.

Commands: ``simulate``, ``fit-perception``, ``verify``, ``adversarial``,
``sweep`` and ``export-levelsets``.  Every command reads one JSON config
(``--config``), writes into an output directory and finishes with a
``summary.json`` that lists each emitted file with its SHA-256.

Exit codes: 0 ok, 1 check or runtime failure, 2 config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import jsonschema

from .baseline import NavigationFunction, demo_stuck
from .engine import ControllerParams
from .errors import ConfigError, HybridNavError
from .geometry import Obstacle, build_covering
from .perception import collect_training_data, coverage, fit
from .plotting import trajectory_svg
from .potentials import PotentialField, write_level_set_csv
from .scenarios import (Scenario, builtin_names, builtin_scenario, load_scenario, run_scenario,
                        with_seed)
from .verify import SUITES, run_suites

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_VERSION = 1

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_rect = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": CONFIG_VERSION},
        "scenario": {"oneOf": [{"type": "string"}, {"type": "object"}]},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "workers": {"type": "integer", "minimum": 1},
        "emit": {"type": "object", "additionalProperties": False,
                 "properties": {"csv": {"type": "boolean"}, "svg": {"type": "boolean"},
                                "levelsets": {"type": "boolean"}}},
        "plot": {"type": "object", "additionalProperties": False,
                 "properties": {"window": _rect, "resolution": {"type": "number", "exclusiveMinimum": 0}}},
        "verify": {"type": "object", "additionalProperties": False,
                   "properties": {"suites": {"type": "array", "items": {"enum": list(SUITES)}},
                                  "gradient_points": {"type": "integer", "minimum": 1},
                                  "lyapunov_runs": {"type": "integer", "minimum": 1},
                                  "coverage_samples": {"type": "integer", "minimum": 1},
                                  "geometry_samples": {"type": "integer", "minimum": 1},
                                  "spacing": {"type": "number", "exclusiveMinimum": 0}}},
        "adversarial": {"type": "object", "additionalProperties": False,
                        "properties": {"obstacle": {"type": "object", "additionalProperties": False,
                                                    "required": ["center", "radius"],
                                                    "properties": {"center": _point,
                                                                   "radius": {"type": "number", "exclusiveMinimum": 0}}},
                                       "target": _point,
                                       "beta": {"type": "number", "minimum": 0},
                                       "rho_b": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                       "budget": {"type": "number", "minimum": 0},
                                       "t_end": {"type": "number", "exclusiveMinimum": 0},
                                       "init": _point,
                                       "m_dirs": {"type": "integer", "minimum": 1},
                                       "engagement": {"type": "number", "minimum": 0},
                                       "k": {"type": "number", "exclusiveMinimum": 0},
                                       "h": {"type": "number", "exclusiveMinimum": 0},
                                       "delta": {"type": "number", "exclusiveMinimum": 0}}},
        "sweep": {"type": "object", "additionalProperties": False,
                  "properties": {"n_seeds": {"type": "integer", "minimum": 1},
                                 "first_seed": {"type": "integer", "minimum": 0},
                                 "min_convergence_rate": {"type": "number", "minimum": 0, "maximum": 1}}},
        "levelsets": {"type": "object", "additionalProperties": False,
                      "properties": {"window": _rect, "resolution": {"type": "number", "exclusiveMinimum": 0}}},
    },
}

DEFAULT_ADVERSARIAL = {"obstacle": {"center": [0.0, 0.0], "radius": 0.2}, "target": [10.0, 0.0],
                       "beta": 20.0, "rho_b": 1.0, "budget": 0.1, "t_end": 50.0, "m_dirs": 16,
                       "engagement": 1.0, "k": 1.0, "h": 0.01, "delta": 0.5}


class Context:
    """Parsed config plus command-line overrides, and the file manifest."""

    def __init__(self, config: dict, base: Path, args):
        self.config = config
        self.base = base
        self.out = Path(args.out or config.get("output_dir", "out"))
        if not self.out.is_absolute() and args.out is None:
            self.out = base / self.out
        self.seed = args.seed if args.seed is not None else config.get("seed")
        self.workers = args.workers or config.get("workers", 1)
        emit = {"csv": True, "svg": False, "levelsets": False, **config.get("emit", {})}
        if args.emit is not None:
            wanted = {e.strip() for e in args.emit.split(",") if e.strip()}
            unknown = wanted - set(emit)
            if unknown:
                raise ConfigError(f"unknown --emit entries: {sorted(unknown)}")
            emit = {k: (k in wanted) for k in emit}
        self.emit = emit
        self.files: list[Path] = []

    def scenario(self) -> Scenario:
        spec = self.config.get("scenario", "noisy_dropout")
        if isinstance(spec, dict):
            s = Scenario.from_dict(spec)
        elif spec in builtin_names():
            s = builtin_scenario(spec)
        else:
            path = Path(spec)
            if not path.is_absolute():
                path = self.base / path
            if not path.exists():
                raise ConfigError(f"scenario '{spec}' is neither a shipped scenario nor a file")
            s = load_scenario(path)
        return with_seed(s, self.seed) if self.seed is not None else s

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.files.append(p)
        return p

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text)

    def finish(self, command: str, summary: dict) -> None:
        manifest = []
        for p in self.files:
            if p.is_dir():
                continue
            manifest.append({"path": str(p.relative_to(self.out)), "bytes": p.stat().st_size,
                             "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        doc = {"command": command, "schema_version": CONFIG_VERSION, **summary, "manifest": manifest}
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "summary.json").write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    # JSON has no inf/nan; encode them as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def load_config(path: str | None) -> tuple[dict, Path]:
    """Read and schema-check a config file; no file means the defaults."""
    if path is None:
        return {"schema_version": CONFIG_VERSION}, Path.cwd()
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path)
        raise ConfigError(f"config invalid at '{where}': {exc.message}") from None
    return doc, p.parent


# commands -------------------------------------------------------------------

def _plot_window(ctx: Context, scenario: Scenario):
    plot = ctx.config.get("plot", {})
    return tuple(plot.get("window", scenario.perception.region)), plot.get("resolution", 0.5)


def cmd_simulate(ctx: Context) -> int:
    s = ctx.scenario()
    t0 = time.perf_counter()
    results = run_scenario(s, ctx.workers)
    for r in results:
        if ctx.emit["csv"]:
            r.arc.write_csv(ctx.path(f"run_{r.index:03d}.csv"))
    if results and results[0].leader is not None and ctx.emit["csv"]:
        results[0].leader.write_csv(ctx.path("leader.csv"))
    if ctx.emit["svg"]:
        window, res = _plot_window(ctx, s)
        ctx.write_text("trajectories.svg", trajectory_svg(s.field(), [r.arc for r in results], window, res,
                                                          title=s.name))
    if ctx.emit["levelsets"]:
        _levelsets(ctx, s)
    failed = [r for r in results if r.status not in ("converged", "t_max")]
    ctx.finish("simulate", {"scenario": s.to_dict(), "runs": [r.summary() for r in results],
                            "n_converged": sum(r.converged for r in results), "n_runs": len(results)})
    print(f"simulate: {sum(r.converged for r in results)}/{len(results)} converged "
          f"in {time.perf_counter() - t0:.2f} s -> {ctx.out}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_sweep(ctx: Context) -> int:
    s = ctx.scenario()
    cfg = {"n_seeds": 100, "first_seed": s.seed, "min_convergence_rate": 0.95, **ctx.config.get("sweep", {})}
    t0 = time.perf_counter()
    rows = []
    for seed in range(cfg["first_seed"], cfg["first_seed"] + cfg["n_seeds"]):
        for r in run_scenario(with_seed(s, seed), ctx.workers):
            if ctx.emit["csv"]:
                r.arc.write_csv(ctx.path(f"seed_{seed:05d}_run_{r.index:03d}.csv"))
            rows.append({"seed": seed, **r.summary()})
    n = len(rows)
    rate = sum(r["converged"] for r in rows) / n
    clearance = min(r["min_obstacle_clearance"] for r in rows)
    max_jumps = max(r["jump_count"] for r in rows)
    ok = rate >= cfg["min_convergence_rate"] and clearance >= 0.0
    ctx.finish("sweep", {"scenario": s.to_dict(), "sweep": cfg, "n_runs": n, "convergence_rate": rate,
                         "min_obstacle_clearance": clearance, "max_jumps": max_jumps,
                         "statuses": sorted({r["status"] for r in rows}), "runs": rows, "passed": ok})
    print(f"sweep: {n} runs, convergence {rate:.3f}, min clearance {clearance:.3f} m, "
          f"max jumps {max_jumps}, {time.perf_counter() - t0:.1f} s")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_fit_perception(ctx: Context) -> int:
    s = ctx.scenario()
    pc = s.perception
    mode = pc.mode if pc.mode != "exact" else "1nn"
    T = collect_training_data(s.world, pc.region, pc.spacing, pc.camera())
    pmap = fit(T, mode)
    cov = coverage(pmap, T, pmap.lipschitz, math.inf)
    tdir = ctx.out / "training"
    T.save(tdir)
    ctx.files += sorted(tdir.iterdir())
    report = {"mode": mode, "n_training": len(T), "spacing": pc.spacing, "lipschitz": pmap.lipschitz,
              "epsilon_star": cov.epsilon_star, "coverage": cov.to_dict()}
    ctx.write_text("perception.json", json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    ctx.finish("fit-perception", report)
    print(f"fit-perception: N={len(T)} L={pmap.lipschitz:.4g} eps*={cov.epsilon_star:.4g}")
    return EXIT_OK


def cmd_verify(ctx: Context, suite: str) -> int:
    s = ctx.scenario()
    v = ctx.config.get("verify", {})
    suites = SUITES if suite == "all" else (suite,)
    if suite == "all" and "suites" in v:
        suites = tuple(v["suites"])
    checks = run_suites(s, suites, seed=s.seed, n_gradient=v.get("gradient_points", 1000),
                        n_runs=v.get("lyapunov_runs", 20), n_coverage=v.get("coverage_samples", 10_000),
                        n_geometry=v.get("geometry_samples", 10_000), spacing=v.get("spacing"))
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    ctx.write_text("verify.json", json.dumps(_clean([c.to_dict() for c in checks]), indent=2) + "\n")
    summary = {"suites": list(suites), "passed": not failed, "checks": [c.to_dict() for c in checks]}
    if failed:
        summary["first_counterexample"] = {"check": f"{failed[0].suite}/{failed[0].name}",
                                           "counterexample": failed[0].counterexample}
        print(json.dumps(_clean(summary["first_counterexample"])))
    ctx.finish("verify", summary)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_adversarial(ctx: Context) -> int:
    a = {**DEFAULT_ADVERSARIAL, **ctx.config.get("adversarial", {})}
    try:
        nav = NavigationFunction(a["target"], Obstacle(a["obstacle"]["center"], a["obstacle"]["radius"]),
                                 a["beta"], a["rho_b"])
        params = ControllerParams(k=a["k"], h=a["h"], delta=a["delta"], t_max=a["t_end"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    t0 = time.perf_counter()
    demo = demo_stuck(nav, a["budget"], a["t_end"], a.get("init"), params, a["rho_b"],
                      m_dirs=a["m_dirs"], engagement=a["engagement"])
    if ctx.emit["csv"]:
        demo.smooth.write_csv(ctx.path("smooth.csv"))
        demo.hybrid.write_csv(ctx.path("hybrid.csv"))
    if ctx.emit["svg"]:
        cov = build_covering(nav.obstacle.center, nav.obstacle.radius, nav.target)
        c = nav.obstacle.center
        window = (c.x - 4.0, nav.target.x + 2.0, c.y - 4.0, c.y + 4.0)
        ctx.write_text("adversarial.svg", trajectory_svg(PotentialField.for_covering(cov, a["rho_b"]),
                                                         [demo.smooth, demo.hybrid], window, 0.1,
                                                         title="smooth vs hybrid"))
    summary = demo.summary()
    ctx.finish("adversarial", {"config": a, **summary})
    print(f"adversarial: smooth final distance {summary['smooth']['final_distance']:.3f} m "
          f"({summary['smooth']['status']}), hybrid {summary['hybrid']['status']} "
          f"in {time.perf_counter() - t0:.2f} s")
    return EXIT_OK if demo.hybrid.converged else EXIT_FAIL


def _levelsets(ctx: Context, s: Scenario) -> None:
    ls = ctx.config.get("levelsets", {})
    window = tuple(ls.get("window", s.perception.region))
    res = ls.get("resolution", 0.5)
    field = s.field()
    for q in (1, 2):
        write_level_set_csv(ctx.path(f"levelset_q{q}.csv"), field, q, window, res)


def cmd_export_levelsets(ctx: Context) -> int:
    s = ctx.scenario()
    _levelsets(ctx, s)
    if ctx.emit["svg"]:
        window, res = _plot_window(ctx, s)
        ctx.write_text("levelsets.svg", trajectory_svg(s.field(), [], window, res, title=s.name))
    ctx.finish("export-levelsets", {"scenario": s.to_dict()})
    return EXIT_OK


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridnav", description="Hybrid perception-based navigation around an obstacle")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "run a scenario and write arcs"),
                        ("fit-perception", "fit a perception map and report its coverage"),
                        ("verify", "run invariant suites"),
                        ("adversarial", "smooth vs hybrid under an adversarial estimate error"),
                        ("sweep", "run a scenario over many seeds"),
                        ("export-levelsets", "write V_1/V_2 grids")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--out", help="output directory (created if missing)")
        p.add_argument("--workers", type=int, help="parallel runs (default 1)")
        p.add_argument("--emit", help="comma list from csv,svg,levelsets")
        if name == "verify":
            p.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    return ap


def _error_json(kind: str, exc: Exception) -> str:
    return json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)})


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        config, base = load_config(args.config)
        ctx = Context(config, base, args)
        if args.command == "simulate":
            return cmd_simulate(ctx)
        if args.command == "sweep":
            return cmd_sweep(ctx)
        if args.command == "fit-perception":
            return cmd_fit_perception(ctx)
        if args.command == "verify":
            return cmd_verify(ctx, args.suite)
        if args.command == "adversarial":
            return cmd_adversarial(ctx)
        return cmd_export_levelsets(ctx)
    except ConfigError as exc:
        print(_error_json("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    except HybridNavError as exc:
        print(_error_json("runtime", exc), file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
