"""Command-line runner.

    epdiff-torus run <config.toml>
    epdiff-torus convergence <config.toml>
    epdiff-torus verify --seed <n> [--suite <name>] [--n <N>] [--output <dir>]

Exit status: 0 success, 2 invalid input, 3 numerical failure. Every failure
also produces an error JSON (stderr, and ``error.json`` in the output
directory when it is known). Relative output paths resolve against
``$EPDIFF_OUTPUT_ROOT`` when set, else the config file's directory.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import commutator_lab as cl
from . import epdiff as ep
from .config import (
    MIN_N,
    OUTPUT_ROOT_ENV,
    ConfigError,
    ExperimentConfig,
    _field_from,
    _symbol,
    load_config,
)
from .errors import EpdiffError, InvalidParameterError
from .fileio import atomic_write, dump_json, write_field
from .operators import realize
from .spectral_core import SpectralField, TorusGrid
from .verification import SUITES, commutator_suite, conjugation_suite, splitting_suite, verify_all

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
ROUNDOFF = 1e-12


class CheckFailed(EpdiffError):
    """A verification run finished but some property failed."""


# ---------------------------------------------------------------- run kinds


def _write_trajectory(out: Path, traj: ep.GeodesicTrajectory, lagrangian: bool):
    atomic_write(out / "trajectory.csv", traj.to_csv())
    for i, state in enumerate(traj.states):
        write_field(out / "snapshots" / f"u_{i:05d}.field", state.eulerian())
        if lagrangian and state.phi is not None:
            write_field(out / "snapshots" / f"phi_{i:05d}.field", state.phi.displacement)


def _geodesic_summary(cfg: ExperimentConfig, traj: ep.GeodesicTrajectory) -> dict:
    e = traj.series("energy")
    m = np.array(traj.series("momentum_int"))
    h = traj.series("hq_norm")
    solver = cfg.solver
    return {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "grid": {"dim": cfg.grid.dim, "n": cfg.grid.n},
        "s": solver.s,
        "q": solver.norm_index,
        "dt": solver.dt,
        "t_end": solver.t_end,
        "integrator": solver.integrator,
        "states": len(traj.states),
        "energy_initial": e[0],
        "energy_final": e[-1],
        "energy_drift": abs(e[-1] - e[0]) / e[0] if e[0] else abs(e[-1] - e[0]),
        "momentum_drift": float(np.max(np.abs(m - m[0]))),
        "hq_growth": float(h.max() / h[0]) if h[0] else 0.0,
    }


def _run_geodesic(cfg: ExperimentConfig) -> dict:
    lagrangian = cfg.kind == "geodesic_lagrangian"
    integrate = ep.integrate_lagrangian if lagrangian else ep.integrate_eulerian
    traj = integrate(cfg.initial, cfg.solver)
    _write_trajectory(cfg.output, traj, lagrangian)
    summary = _geodesic_summary(cfg, traj)
    atomic_write(cfg.output / "summary.json", dump_json(summary))
    return summary


def _run_shoot(cfg: ExperimentConfig) -> dict:
    result = ep.shoot(cfg.target, cfg.solver, cfg.shoot)
    write_field(cfg.output / "u0.field", result.u0)
    report = {
        "kind": cfg.kind,
        "residual": result.residual,
        "converged": result.converged,
        "iterations": result.iterations,
        "history": result.history,
        "mean_velocity": [float(x) for x in result.u0.mean()],
    }
    atomic_write(cfg.output / "shoot.json", dump_json(report))
    if not result.converged:
        raise CheckFailed(f"shooting stopped without reaching tol (residual {result.residual:.3e})")
    return report


def _finish_report(cfg: ExperimentConfig, checks: dict, extra: Optional[dict] = None) -> dict:
    failed = sorted(k for k, c in checks.items() if not c["pass"])
    report = {"kind": cfg.kind, "seed": cfg.seed, "checks": checks, "passed": not failed, "failed": failed}
    report.update(extra or {})
    atomic_write(cfg.output / "report.json", dump_json(report))
    if failed:
        raise CheckFailed(f"checks failed: {', '.join(failed)}")
    return report


def _run_verify_commutators(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("verify")
    n = int(sec.get("n", 2))
    instances = int(sec.get("instances", 20))
    checks = commutator_suite(cfg.grid, n, instances, cfg.seed)
    checks.update(splitting_suite(cfg.grid, np.random.default_rng(cfg.seed), ns=tuple(range(1, n + 1))))
    return _finish_report(cfg, checks, {"n": n, "instances": instances})


def _run_verify_conjugation(cfg: ExperimentConfig) -> dict:
    A = realize(cfg.symbol, cfg.grid, components=cfg.grid.dim)
    return _finish_report(cfg, conjugation_suite(A, cfg.seed))


def _run_probe(cfg: ExperimentConfig) -> dict:
    sec = cfg.section("probe")
    n = int(sec.get("n", 1))
    q = float(sec.get("q", 2.0))
    r = float(sec.get("r", 1.0))
    samples = int(sec.get("samples", 200))
    resolutions = [int(x) for x in sec.get("resolutions", [cfg.grid.n])]

    def one(N):
        grid = TorusGrid(cfg.grid.dim, N)
        P = realize(_symbol(cfg.raw, grid, cfg.base_dir), grid)
        return cl.boundedness_probe(P, n, q, r, samples, cfg.seed)

    reports = _map(one, resolutions, cfg.workers)
    for rep in reports:
        atomic_write(cfg.output / f"probe_N{rep.N}.json", dump_json(rep.as_dict()))
    maxes = np.array([rep.max_ratio for rep in reports])
    summary = {"kind": cfg.kind, "reports": [rep.as_dict() for rep in reports]}
    if len(reports) > 1 and maxes.min() > 0:
        summary["spread"] = float((maxes.max() - maxes.min()) / maxes.min())
        summary["slope"] = float(np.polyfit(np.log(resolutions), np.log(maxes), 1)[0])
    atomic_write(cfg.output / "probe_summary.json", dump_json(summary))
    return summary


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _band_distance(coarse: SpectralField, fine: SpectralField) -> float:
    """L2 distance after embedding the coarse coefficients into the fine band."""
    cg, fg = coarse.grid, fine.grid
    total = 0.0
    fine_band = fine.coeffs.reshape(fine.components, -1)[:, fg.band_flat]
    matched = np.zeros(fg.band_size, dtype=bool)
    for b, k in enumerate(fg.band_freqs):
        if cg.in_band(k):
            matched[b] = True
            diff = fine.coeffs[(slice(None),) + fg.index_of(k)] - coarse.coeffs[(slice(None),) + cg.index_of(k)]
            total += float(np.sum(np.abs(diff) ** 2))
    total += float(np.sum(np.abs(fine_band[:, ~matched]) ** 2))
    return float(np.sqrt(total))


def convergence_study(cfg: ExperimentConfig) -> dict:
    """Self-convergence of the Eulerian solver over a dt or N ladder.

    Errors are measured against the finest level; the fitted slope is the
    least-squares log-log slope over the remaining levels.
    """
    sec = cfg.section("convergence")
    param = sec.get("parameter", "dt")
    levels = [float(x) for x in sec["levels"]]
    if len(levels) < 3:
        raise ConfigError("convergence.levels", "ladder needs at least 3 levels")
    base = cfg.solver

    def solve_level(x):
        if param == "dt":
            solver = ep.SolverConfig(base.grid, base.inertia, x, base.t_end, base.integrator, 10**9, base.q, False)
            u0 = cfg.initial
        else:
            grid = TorusGrid(cfg.grid.dim, int(x))
            spec = _symbol(cfg.raw, grid, cfg.base_dir)
            solver = ep.SolverConfig(grid, spec, base.dt, base.t_end, base.integrator, 10**9, base.q, False)
            u0 = _field_from(cfg.raw.get("initial", {}), "initial", grid, cfg.base_dir)
        return ep.integrate_eulerian(u0, solver).final.u

    finals = _map(solve_level, levels, cfg.workers)
    fine_idx = int(np.argmin(levels)) if param == "dt" else int(np.argmax(levels))
    fine = finals[fine_idx]
    order = sorted(range(len(levels)), key=lambda i: -levels[i] if param == "dt" else levels[i])
    errors = [0.0] * len(levels)
    for i in range(len(levels)):
        if i != fine_idx:
            errors[i] = _band_distance(finals[i], fine) if param == "n" else float(
                np.sqrt(np.sum(np.abs((finals[i] - fine).coeffs) ** 2))
            )
    coarse = [i for i in order if i != fine_idx]
    xs = np.log([levels[i] for i in coarse])
    ys = np.log([max(errors[i], 1e-300) for i in coarse])
    slope = float(np.polyfit(xs, ys, 1)[0])
    ratios = [errors[a] / errors[b] for a, b in zip(coarse, coarse[1:]) if errors[b] > 0]
    rows = ["level,dt,n,error"]
    for rank, i in enumerate(order):
        dt = levels[i] if param == "dt" else base.dt
        n = cfg.grid.n if param == "dt" else int(levels[i])
        rows.append(f"{rank},{dt:.16e},{n},{errors[i]:.16e}")
        write_field(cfg.output / "levels" / f"level_{rank}.field", finals[i])
    atomic_write(cfg.output / "convergence.csv", "\n".join(rows) + "\n")
    result = {
        "parameter": param,
        "levels": [levels[i] for i in order],
        "errors": [errors[i] for i in order],
        "reference": "finest",
        "slope": slope,
        "ratios": ratios,
    }
    if param == "n":
        # once the error sits at round-off the ratio carries no information
        floor = ROUNDOFF * max(float(np.sqrt(np.sum(np.abs(fine.coeffs) ** 2))), 1.0)
        result["spectral"] = all(
            errors[a] / errors[b] > 10 if errors[b] > floor else True
            for a, b in zip(coarse, coarse[1:])
        )
    atomic_write(cfg.output / "convergence.json", dump_json(result))
    return result


RUNNERS = {
    "geodesic_eulerian": _run_geodesic,
    "geodesic_lagrangian": _run_geodesic,
    "shoot": _run_shoot,
    "verify_commutators": _run_verify_commutators,
    "verify_conjugation": _run_verify_conjugation,
    "probe_boundedness": _run_probe,
    "convergence": convergence_study,
}


# ---------------------------------------------------------------- error reporting


def _error_payload(exc: BaseException, category: str) -> dict:
    payload = {
        "status": "error",
        "category": category,
        "error": type(exc).__name__,
        "message": str(exc),
    }
    for attr in ("field", "time", "norm_history", "residual", "iterations", "min_jacobian", "smallest_singular_value"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return payload


def _fail(exc: BaseException, category: str, code: int, output: Optional[Path]) -> int:
    text = dump_json(_error_payload(exc, category))
    sys.stderr.write(text)
    if output is not None:
        try:
            atomic_write(output / "error.json", text)
        except OSError:
            pass
    return code


def _guarded(action, output_of):
    """Run ``action`` and translate exceptions into exit codes."""
    output = None
    try:
        output = output_of()
        action()
        return EXIT_OK
    except InvalidParameterError as exc:
        return _fail(exc, "validation", EXIT_INVALID, output)
    except (EpdiffError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(exc, "numerical", EXIT_NUMERICAL, output)


# ---------------------------------------------------------------- entry point


def _cmd_run(args) -> int:
    state = {}

    def output():
        state["cfg"] = load_config(args.config)
        return state["cfg"].output

    def action():
        cfg = state["cfg"]
        RUNNERS[cfg.kind](cfg)

    return _guarded(action, output)


def _cmd_convergence(args) -> int:
    state = {}

    def output():
        cfg = load_config(args.config)
        if cfg.kind != "convergence" and "convergence" not in cfg.raw:
            raise ConfigError("convergence", "config lists no ladder")
        if cfg.solver is None or cfg.initial is None:
            raise ConfigError("kind", "convergence needs solver and initial sections")
        state["cfg"] = cfg
        return cfg.output

    return _guarded(lambda: convergence_study(state["cfg"]), output)


def _cmd_verify(args) -> int:
    out_dir = {}

    def output():
        if args.n < MIN_N or args.n % 2:
            raise ConfigError("n", f"must be even and >= {MIN_N}, got {args.n}")
        if args.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        root = args.output or os.environ.get(OUTPUT_ROOT_ENV) or "."
        out_dir["path"] = Path(root)
        return out_dir["path"]

    def action():
        report = verify_all(args.seed, args.suite or None, args.n)
        text = dump_json(report)
        atomic_write(out_dir["path"] / f"verify_seed{args.seed}.json", text)
        sys.stdout.write(text)
        if not report["passed"]:
            raise CheckFailed(f"checks failed: {', '.join(report['failed'])}")

    return _guarded(action, output)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epdiff-torus", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the pipeline named by the config's kind")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("convergence", help="self-convergence study over a dt or N ladder")
    p.add_argument("config")
    p.set_defaults(func=_cmd_convergence)
    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--suite", action="append", choices=SUITES)
    p.add_argument("--n", type=int, default=MIN_N, help=f"suite resolution (even, >= {MIN_N})")
    p.add_argument("--output", default=None, help="report directory")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
