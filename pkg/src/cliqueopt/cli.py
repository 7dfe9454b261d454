"""Command-line entry point: ``cliqueopt {convergence,energy-sweep,optimize,check}``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .cholesky_metric import NotPositiveDefiniteError
from .experiments import (
    ConfigError,
    ConvergenceConfig,
    EnergySweepConfig,
    emit_report,
    run_convergence,
    run_energy_sweep,
)
from .objective import (
    FDBreakdownError,
    IdentityMap,
    PointMap,
    SquaredDerivativeTerm,
    check_term_gradient,
    config_penalty_terms,
    kinetic_energy_term,
    posture_term,
)
from .optimizer import augmented_lagrangian_solve, goal_constraint, obstacle_constraint
from .problem_file import load_problem

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
CHECK_TOL = 1e-5

log = logging.getLogger("cliqueopt")


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _emit(report, args):
    if args.out is None:
        if args.format == "json":
            print(json.dumps(report.to_dict(), indent=2))
        else:
            print(",".join(report.columns))
            for r in report.rows:
                print(",".join("" if r[c] is None else str(r[c]) for c in report.columns))
        return
    for p in emit_report(report, args.format, args.out):
        log.info("wrote %s", p)


def cmd_convergence(args) -> int:
    cfg = ConvergenceConfig.from_dict(_read_config(args.config))
    t0 = time.perf_counter()
    report = run_convergence(cfg)
    log.info("convergence experiment took %.1f s", time.perf_counter() - t0)
    for s in report.summary["slopes"]:
        if s["slope"] is None:
            log.info("k=%d: slope fit skipped (%d points above floor)", s["k"], s["n_points"])
        else:
            log.info("k=%d: slope %.3f, R^2 %.4f", s["k"], s["slope"], s["r2"])
    _emit(report, args)
    return EXIT_OK


def cmd_energy_sweep(args) -> int:
    data = _read_config(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = EnergySweepConfig.from_dict(data)
    t0 = time.perf_counter()
    report = run_energy_sweep(cfg)
    log.info("energy sweep took %.1f s", time.perf_counter() - t0)
    _emit(report, args)
    return EXIT_OK


def cmd_optimize(args) -> int:
    if args.config is None:
        raise ConfigError("optimize needs --config <problem file>")
    spec = load_problem(args.config)
    report = augmented_lagrangian_solve(spec.problem, spec.init, spec.solver)
    out = json.dumps(report.to_dict(), indent=2)
    if args.out is None:
        print(out)
    else:
        Path(args.out).write_text(out)
    log.info("termination %s, max violation %.2e", report.termination, report.final_violation)
    return EXIT_OK if report.converged else EXIT_NUMERIC


def _stock_checks(chain, rng):
    """Terms and constraints exercised by ``check`` when no problem file is given."""
    d, dt = chain.dof, 0.05
    terms = config_penalty_terms(0.5, 0.01, dt, d) + [
        posture_term(np.zeros(d), 0.1),
        SquaredDerivativeTerm(PointMap(chain, "ee"), 1, 1.0, dt),
        SquaredDerivativeTerm(PointMap(chain, "ee"), 2, 1.0, dt),
        SquaredDerivativeTerm(IdentityMap(d), 1, 0.1, dt, integrated=False),
    ]
    if chain.bodies:
        terms.append(kinetic_energy_term(chain, 1.0, dt, "exact"))
    x = kin.point_position(chain, rng.uniform(-1, 1, d), chain.resolve_frame("ee"))
    constraints = [goal_constraint(chain, x + 0.1), obstacle_constraint(chain, x + 0.3, 0.1, 0.02)]
    return terms, constraints


def _fd_jacobian(fun, q, h=1e-6):
    cols = [(fun(q + h * e) - fun(q - h * e)) / (2 * h) for e in np.eye(q.size)]
    return np.stack(cols, axis=-1)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def cmd_check(args) -> int:
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    if args.config is not None:
        spec = load_problem(args.config)
        chain, terms, constraints = spec.chain, spec.problem.terms, spec.problem.constraints
    else:
        chain = kin.desk_arm()
        terms, constraints = _stock_checks(chain, rng)
    worst = {}
    for _ in range(20):
        q = rng.uniform(-1, 1, chain.dof)
        for name in chain.frames:
            f = chain.resolve_frame(name)
            err = _rel(kin.jacobian_point(chain, q, f), _fd_jacobian(lambda x: kin.point_position(chain, x, f), q))
            worst[f"jacobian:{name}"] = max(worst.get(f"jacobian:{name}", 0.0), err)
        if chain.bodies:
            err = _rel(kin.inertial_map_jacobian(chain, q), _fd_jacobian(lambda x: kin.inertial_map(chain, x), q))
            worst["jacobian:inertial_map"] = max(worst.get("jacobian:inertial_map", 0.0), err)
        for i, term in enumerate(terms):
            n = term.order + 1 if term.order else 1
            qc = rng.uniform(-1, 1, n * chain.dof)
            key = f"term{i}:{type(term).__name__}"
            worst[key] = max(worst.get(key, 0.0), check_term_gradient(term, qc))
        for i, c in enumerate(constraints):
            key = f"constraint{i}:{c.name}"
            J = c.jac(q)
            fd = _fd_jacobian(lambda x: c.fun(x), q)
            worst[key] = max(worst.get(key, 0.0), _rel(J, fd))
    failed = False
    for key, err in worst.items():
        ok = err <= CHECK_TOL
        failed |= not ok
        print(f"{'PASS' if ok else 'FAIL'} {key} max rel err {err:.2e}")
    return EXIT_NUMERIC if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cliqueopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, help_ in [
        ("convergence", cmd_convergence, "true vs Gauss-Newton Hessian convergence rates"),
        ("energy-sweep", cmd_energy_sweep, "kinetic energy weight sweep over reach trials"),
        ("optimize", cmd_optimize, "solve a problem file"),
        ("check", cmd_check, "finite-difference self-checks"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config or problem file")
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--seed", type=int, help="random seed")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (FDBreakdownError, NotPositiveDefiniteError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
