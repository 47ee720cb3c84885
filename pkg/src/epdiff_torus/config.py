"""Experiment configuration (TOML) and its validation.

Example::

    kind = "geodesic_eulerian"
    seed = 0
    output = "runs/ch"

    [grid]
    dim = 1
    n = 128

    [symbol]              # inline, or: file = "inertia.toml"
    kind = "multiplier"
    s = 1.0

    [solver]
    dt = 1e-3
    t_end = 1.0
    integrator = "rk4"
    cadence = 100

    [initial]             # constant = [c], file = "u0.field", or [[initial.modes]]
    [[initial.modes]]
    component = 0
    k = [1]
    sin = 0.1

Every value is checked before any computation; a bad value raises
:class:`ConfigError` carrying the dotted name of the offending field.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .epdiff import ShootOptions, SolverConfig
from .errors import DiffeoInvariantError, InvalidParameterError
from .fileio import load_toml, read_field, read_symbol, symbol_from_dict
from .operators import SymbolSpec
from .spectral_core import Diffeo, SpectralField, TorusGrid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "RUN_KINDS",
    "OUTPUT_ROOT_ENV",
    "MIN_N",
]

RUN_KINDS = (
    "geodesic_eulerian",
    "geodesic_lagrangian",
    "shoot",
    "verify_commutators",
    "verify_conjugation",
    "probe_boundedness",
    "convergence",
)
OUTPUT_ROOT_ENV = "EPDIFF_OUTPUT_ROOT"
MIN_N = 32


class ConfigError(InvalidParameterError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _get(section: dict, key: str, prefix: str, kind, default=None, required=False):
    name = f"{prefix}.{key}" if prefix else key
    if key not in section:
        if required:
            raise ConfigError(name, "missing")
        return default
    value = section[key]
    try:
        if kind is float and isinstance(value, bool):
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None


def _positive(value, name):
    if value is not None and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    output: Path
    base_dir: Path
    grid: TorusGrid
    raw: dict = field(repr=False)
    symbol: Optional[SymbolSpec] = None
    solver: Optional[SolverConfig] = None
    initial: Optional[SpectralField] = None
    target: Optional[Diffeo] = None
    shoot: ShootOptions = ShootOptions()
    workers: int = 1

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})


def _resolve_output(raw_output: str, base_dir: Path) -> Path:
    out = Path(raw_output)
    if out.is_absolute():
        return out
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return (Path(root) if root else base_dir) / out


def _grid(raw: dict) -> TorusGrid:
    sec = raw.get("grid")
    if not isinstance(sec, dict):
        raise ConfigError("grid", "missing section")
    dim = _get(sec, "dim", "grid", int, 1)
    n = _get(sec, "n", "grid", int, required=True)
    if dim not in (1, 2):
        raise ConfigError("grid.dim", f"must be 1 or 2, got {dim}")
    if n < MIN_N or n % 2:
        raise ConfigError("grid.n", f"must be even and >= {MIN_N}, got {n}")
    return TorusGrid(dim, n)


def _symbol(raw: dict, grid: TorusGrid, base: Path) -> SymbolSpec:
    sec = raw.get("symbol")
    if not isinstance(sec, dict):
        raise ConfigError("symbol", "missing section")
    try:
        if "file" in sec:
            path = base / sec["file"]
            if not path.exists():
                raise ConfigError("symbol.file", f"no such file {path}")
            return read_symbol(path, grid)
        return symbol_from_dict(sec, grid, base)
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError("symbol", f"missing key {exc}") from None
    except (InvalidParameterError, OSError) as exc:
        raise ConfigError("symbol", str(exc)) from None


def _field_from(sec: dict, prefix: str, grid: TorusGrid, base: Path) -> SpectralField:
    d = grid.dim
    if "file" in sec:
        path = base / sec["file"]
        if not path.exists():
            raise ConfigError(f"{prefix}.file", f"no such file {path}")
        try:
            f = read_field(path)
        except InvalidParameterError as exc:
            raise ConfigError(f"{prefix}.file", str(exc)) from None
        if f.grid != grid or f.components != d:
            raise ConfigError(f"{prefix}.file", "field grid or components do not match")
        return f
    if "constant" in sec:
        c = np.atleast_1d(np.asarray(sec["constant"], dtype=float))
        if c.shape != (d,):
            raise ConfigError(f"{prefix}.constant", f"needs {d} entries")
        return SpectralField.constant(grid, c)
    if "modes" in sec:
        coeffs = np.zeros((d,) + grid.shape, dtype=complex)
        for i, mode in enumerate(sec["modes"]):
            name = f"{prefix}.modes[{i}]"
            comp = _get(mode, "component", name, int, 0)
            k = np.atleast_1d(np.asarray(mode.get("k", [0] * d), dtype=int))
            if not 0 <= comp < d:
                raise ConfigError(f"{name}.component", f"out of range: {comp}")
            if k.shape != (d,) or not grid.in_band(k):
                raise ConfigError(f"{name}.k", f"not a band frequency: {k.tolist()}")
            a = _get(mode, "cos", name, float, 0.0)
            b = _get(mode, "sin", name, float, 0.0)
            # a cos(2 pi k.x) + b sin(2 pi k.x)
            if not np.any(k):
                coeffs[(comp,) + grid.index_of(k)] += a
                continue
            coeffs[(comp,) + grid.index_of(k)] += 0.5 * (a - 1j * b)
            coeffs[(comp,) + grid.index_of(-k)] += 0.5 * (a + 1j * b)
        return SpectralField(grid, coeffs)
    raise ConfigError(prefix, "needs one of 'file', 'constant', 'modes'")


def _solver(raw: dict, grid: TorusGrid, spec: SymbolSpec) -> SolverConfig:
    sec = raw.get("solver")
    if not isinstance(sec, dict):
        raise ConfigError("solver", "missing section")
    dt = _positive(_get(sec, "dt", "solver", float, required=True), "solver.dt")
    t_end = _positive(_get(sec, "t_end", "solver", float, required=True), "solver.t_end")
    if dt > t_end:
        raise ConfigError("solver.dt", "must not exceed solver.t_end")
    integrator = _get(sec, "integrator", "solver", str, "rk4")
    if integrator not in ("rk4", "midpoint"):
        raise ConfigError("solver.integrator", f"unknown integrator {integrator!r}")
    cadence = _get(sec, "cadence", "solver", int, 1)
    if cadence < 1:
        raise ConfigError("solver.cadence", "must be >= 1")
    q = _get(sec, "q", "solver", float, None)
    if q is not None and q < 0:
        raise ConfigError("solver.q", "must be non-negative")
    if spec.order < 1:
        raise ConfigError("symbol", "inertia order 2s must be >= 1 (s >= 1/2)")
    try:
        return SolverConfig(grid, spec, dt, t_end, integrator, cadence, q)
    except InvalidParameterError as exc:
        raise ConfigError("symbol", str(exc)) from None


def parse_config(raw: dict, base_dir: Path) -> ExperimentConfig:
    kind = raw.get("kind")
    if kind not in RUN_KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(RUN_KINDS)}; got {kind!r}")
    seed = _get(raw, "seed", "", int, 0)
    if seed < 0:
        raise ConfigError("seed", "must be non-negative")
    output = _get(raw, "output", "", str, "output")
    workers = _get(raw, "workers", "", int, 1)
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")
    grid = _grid(raw)
    cfg = ExperimentConfig(
        kind=kind,
        seed=seed,
        output=_resolve_output(output, base_dir),
        base_dir=base_dir,
        grid=grid,
        raw=raw,
        workers=workers,
    )
    needs_symbol = kind != "verify_commutators"
    if needs_symbol:
        cfg.symbol = _symbol(raw, grid, base_dir)
    if kind in ("geodesic_eulerian", "geodesic_lagrangian", "shoot", "convergence"):
        cfg.solver = _solver(raw, grid, cfg.symbol)
    if kind in ("geodesic_eulerian", "geodesic_lagrangian", "convergence"):
        cfg.initial = _field_from(raw.get("initial", {}), "initial", grid, base_dir)
    if kind == "shoot":
        cfg.target = _target(raw.get("target", {}), grid, base_dir)
        sec = raw.get("shoot", {})
        cfg.shoot = ShootOptions(
            max_iter=_get(sec, "max_iter", "shoot", int, ShootOptions.max_iter),
            step=_positive(_get(sec, "step", "shoot", float, ShootOptions.step), "shoot.step"),
            tol=_positive(_get(sec, "tol", "shoot", float, ShootOptions.tol), "shoot.tol"),
        )
    if kind == "verify_commutators":
        sec = raw.get("verify", {})
        n = _get(sec, "n", "verify", int, 2)
        if n not in (1, 2):
            raise ConfigError("verify.n", f"must be 1 or 2, got {n}")
        inst = _get(sec, "instances", "verify", int, 20)
        if inst < 1:
            raise ConfigError("verify.instances", "must be >= 1")
    if kind == "probe_boundedness":
        sec = raw.get("probe", {})
        n = _get(sec, "n", "probe", int, 1)
        q = _get(sec, "q", "probe", float, 2.0)
        r = _get(sec, "r", "probe", float, 1.0)
        samples = _get(sec, "samples", "probe", int, 200)
        if n < 1:
            raise ConfigError("probe.n", "must be >= 1")
        if not q > 1 + grid.dim / 2:
            raise ConfigError("probe.q", f"must exceed 1 + d/2, got {q}")
        if not 1 <= r <= q:
            raise ConfigError("probe.r", f"must satisfy 1 <= r <= q, got {r}")
        if samples < 1:
            raise ConfigError("probe.samples", "must be >= 1")
        for i, N in enumerate(sec.get("resolutions", [grid.n])):
            if int(N) < MIN_N or int(N) % 2:
                raise ConfigError(f"probe.resolutions[{i}]", f"must be even and >= {MIN_N}")
    if kind == "convergence":
        sec = raw.get("convergence", {})
        param = _get(sec, "parameter", "convergence", str, "dt")
        if param not in ("dt", "n"):
            raise ConfigError("convergence.parameter", "must be 'dt' or 'n'")
        levels = sec.get("levels")
        if not isinstance(levels, list) or len(levels) < 3:
            raise ConfigError("convergence.levels", "ladder needs at least 3 levels")
        for i, x in enumerate(levels):
            if not float(x) > 0:
                raise ConfigError(f"convergence.levels[{i}]", "must be positive")
            if param == "n" and (int(x) < MIN_N or int(x) % 2):
                raise ConfigError(f"convergence.levels[{i}]", f"must be even and >= {MIN_N}")
    return cfg


def _target(sec: dict, grid: TorusGrid, base: Path) -> Diffeo:
    if "shift" in sec:
        shift = np.atleast_1d(np.asarray(sec["shift"], dtype=float))
        if shift.shape != (grid.dim,):
            raise ConfigError("target.shift", f"needs {grid.dim} entries")
        return Diffeo.translation(grid, shift)
    if "displacement" in sec:
        disp = _field_from(sec["displacement"], "target.displacement", grid, base)
        try:
            return Diffeo(disp)
        except DiffeoInvariantError as exc:
            raise ConfigError("target.displacement", str(exc)) from None
    if "identity" in sec and sec["identity"]:
        return Diffeo.identity(grid)
    raise ConfigError("target", "needs 'shift', 'displacement' or identity = true")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"no such file {path}")
    return parse_config(load_toml(path), path.resolve().parent)
