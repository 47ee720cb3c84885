"""Property suites with fixed budgets, used by ``verify`` and by the runner.

Every check records a measured value, its tolerance and a pass flag; a suite
never raises on a failed property, only on invalid parameters.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from . import commutator_lab as cl
from . import conjugation as cj
from . import epdiff as ep
from .errors import InvalidParameterError
from .operators import (
    SpectralOperator,
    SymbolSpec,
    apply,
    bessel_power,
    commutator,
    realize,
    solve,
)
from .spectral_core import (
    Diffeo,
    SpectralField,
    TorusGrid,
    compose,
    invert_diffeo,
    inverse_residual,
    jacobian_det,
    pointwise_multiply,
    sobolev_norm,
)

__all__ = [
    "SUITES",
    "MIN_SUITE_N",
    "verify_all",
    "commutator_suite",
    "conjugation_suite",
    "check",
]

MIN_SUITE_N = 32


def check(value: float, tol: float, upper: bool = True) -> dict:
    value = float(value)
    ok = bool(np.isfinite(value) and (value <= tol if upper else value >= tol))
    return {"value": value, "tolerance": float(tol), "pass": ok}


def _between(value: float, lo: float, hi: float) -> dict:
    value = float(value)
    return {"value": value, "tolerance": [float(lo), float(hi)], "pass": bool(lo <= value <= hi)}


def _l2(f: SpectralField) -> float:
    return sobolev_norm(f, 0.0)


def _rel(a: SpectralField, b: SpectralField) -> float:
    return _l2(a - b) / max(_l2(b), 1e-300)


def _random_field(grid, rng, degree=None, components=1):
    degree = grid.cutoff - 1 if degree is None else degree
    return cl.random_trig_field(grid, degree, rng, components)


def _catalogue(grid: TorusGrid) -> dict:
    g = SpectralField.from_function(grid, lambda *x: 1 + 0.5 * np.sin(2 * np.pi * x[0]))
    return {
        "multiplier": SymbolSpec("multiplier", 2, bessel_power(1.0)),
        "separable": SymbolSpec("separable", 2, terms=[(g, bessel_power(1.0))]),
    }


def spectral_suite(n: int, rng: np.random.Generator) -> dict:
    grid = TorusGrid(1, n)
    out = {}
    f = _random_field(grid, rng)
    quad = float(np.mean(f.values() ** 2))
    out["parseval"] = check(abs(sobolev_norm(f, 0) ** 2 - quad) / quad, 1e-10)
    norms = [sobolev_norm(f, q) for q in (0, 0.5, 1, 2, 3)]
    out["norm_monotone"] = {"value": 0.0, "tolerance": 0.0, "pass": bool(np.all(np.diff(norms) >= 0))}
    a, b = _random_field(grid, rng, 4), _random_field(grid, rng, 4)
    exact = np.convolve(
        np.fft.fftshift(a.coeffs[0]), np.fft.fftshift(b.coeffs[0])
    )[n // 2 : n // 2 + n]
    prod = np.fft.fftshift(pointwise_multiply(a, b).coeffs[0])
    out["dealiased_product"] = check(np.max(np.abs(prod[1:] - exact[1:])), 1e-12)
    disp = SpectralField.from_function(grid, lambda x: 0.1 * np.sin(2 * np.pi * x))
    phi = Diffeo(disp)
    out["inverse_residual"] = check(inverse_residual(phi, invert_diffeo(phi)), 1e-10)
    out["jacobian_integral"] = check(abs(float(jacobian_det(phi).mean()[0]) - 1.0), 1e-10)
    shift = compose(f, Diffeo.translation(grid, 0.3125))
    out["translation_isometry"] = check(abs(sobolev_norm(shift, 2) / sobolev_norm(f, 2) - 1), 1e-10)
    return out


def operators_suite(n: int, rng: np.random.Generator) -> dict:
    grid = TorusGrid(1, n)
    out = {}
    mats = [cl.random_band_limited_operator(grid, grid.cutoff - 1, rng) for _ in range(3)]
    P, Q, R = mats
    lhs = commutator(P @ Q, R)
    rhs = P @ commutator(Q, R) + commutator(P, R) @ Q
    out["leibniz"] = check((lhs - rhs).norm() / lhs.norm(), 1e-10)
    jac = commutator(P, commutator(Q, R)) + commutator(Q, commutator(R, P)) + commutator(R, commutator(P, Q))
    out["jacobi"] = check(jac.norm() / commutator(P, commutator(Q, R)).norm(), 1e-10)
    cat = _catalogue(grid)
    f = _random_field(grid, rng)
    for name, spec in cat.items():
        A = realize(spec, grid)
        out[f"solve_apply_{name}"] = check(_rel(solve(A, apply(A, f)), f), 1e-10)
        out[f"reality_{name}"] = check(A.reality_defect(), 1e-12)
    extra = SymbolSpec("separable", 2, terms=[(SpectralField.constant(grid, [1.0]), bessel_power(0.5))])
    both = realize(cat["separable"] + extra, grid)
    parts = realize(cat["separable"], grid) + realize(extra, grid)
    out["realize_linear"] = check((both - parts).norm() / both.norm(), 1e-12)
    return out


def commutator_suite(
    grid: TorusGrid, n: int = 2, instances: int = 20, seed: int = 0, tol: float = 1e-10
) -> dict:
    """Algebraic identities on ``instances`` random trig-polynomial instances."""
    rng = np.random.default_rng(seed)
    degree = 1 if grid.dim == 2 else 2
    worst: dict = {}
    for _ in range(instances):
        res = cl.identity_residuals(grid, rng, n=n, degree=degree, support=2)
        for key, val in res.items():
            worst[key] = max(worst.get(key, 0.0), val)
    return {key: check(val, tol) for key, val in sorted(worst.items())}


def splitting_suite(grid: TorusGrid, rng: np.random.Generator, ns=(1, 2), tol: float = 1e-9) -> dict:
    out = {}
    A = realize(SymbolSpec("multiplier", 2, bessel_power(1.0)), grid, components=grid.dim)
    degree = 1 if grid.dim == 2 else 2
    for n in ns:
        us = [cl.random_trig_field(grid, degree, rng, grid.dim) for _ in range(n)]
        split = cl.evaluate_split(cl.split_terms(n, grid.dim), us, A)
        ref = cl.a_n(us, A)
        margin = degree * n + 1
        out[f"split_n{n}"] = check(cl.interior_residual(split, ref, margin, ord=2), tol)
    return out


def formula_suite(rng: np.random.Generator) -> dict:
    out = {}
    grid = TorusGrid(1, 32)
    cat = _catalogue(grid)
    phat = cat["separable"].x_fourier(grid)
    worst = 0.0
    for n in range(0, 4):
        for _ in range(5):
            xis = [rng.integers(-5, 6, size=1) for _ in range(n + 2)]
            lam = rng.integers(-1, 2, size=1)
            lhs = cl.p_hat_n(phat, n, lam, xis[: n + 1]) - cl.p_hat_n(
                phat, n, lam, [xis[0] + xis[n + 1]] + xis[1 : n + 1]
            )
            rhs = cl.p_hat_n(phat, n + 1, lam, xis)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    out["p_hat_recursion"] = check(worst, 1e-10)
    modes = [(2,), (3,)]
    amps = [0.4 - 0.3j, 0.2 + 0.5j]
    out["symbol_formula_multiplier"] = check(
        cl.symbol_formula_check(cat["multiplier"], grid, modes[:1], amps[:1], (1,)), 1e-12
    )
    out["symbol_formula_separable"] = check(
        cl.symbol_formula_check(cat["separable"], grid, modes, amps, (1,)), 1e-10
    )
    return out


def conjugation_suite(A: SpectralOperator, seed: int = 0) -> dict:
    """FD convergence of the first and second derivatives of phi -> A_phi v at id."""
    grid = A.grid
    rng = np.random.default_rng(seed)
    d = grid.dim
    dphi1 = cl.random_trig_field(grid, 2, rng, d)
    dphi2 = cl.random_trig_field(grid, 2, rng, d)
    dphi1 = dphi1 * (0.1 / np.max(np.abs(dphi1.values())))
    dphi2 = dphi2 * (0.1 / np.max(np.abs(dphi2.values())))
    v = cl.random_trig_field(grid, 3, rng, d)
    first = cj.fd_convergence(A, [dphi1], v)
    second = cj.fd_convergence(A, [dphi1, dphi2], v)
    out = {
        "first_derivative_order": _between(first.slope, 1.8, 2.2),
        "second_derivative_order": _between(second.slope, 1.8, 2.2),
        "twist_identity": check(_rel(cj.twist(A, Diffeo.identity(grid)).apply(v), apply(A, v)), 1e-12),
        "formula_vs_recurrence": check(
            _rel(cj.derivative_formula(A, dphi1, v), cl.a_n_apply([dphi1], A, v)), 1e-12
        ),
    }
    out["first_derivative_order"]["errors"] = first.errors
    out["second_derivative_order"]["errors"] = second.errors
    return out


def epdiff_suite(n: int, rng: np.random.Generator) -> dict:
    grid = TorusGrid(1, n)
    out = {}
    spec = SymbolSpec("multiplier", 2, bessel_power(1.0))
    A = realize(spec, grid)
    c = SpectralField.constant(grid, [0.3])
    out["steady_state"] = check(_l2(ep.euler_arnold_rhs(c, A)), 1e-12)
    u = SpectralField.from_function(grid, lambda x: np.sin(2 * np.pi * x))
    expected = SpectralField.from_function(grid, lambda x: -6 * np.pi / 5 * np.sin(4 * np.pi * x))
    out["rhs_oracle"] = check(_l2(ep.euler_arnold_rhs(u, A) - expected), 1e-10)
    w = _random_field(grid, rng, 5)
    gap = ep.spray(w, A) - ep.euler_arnold_rhs(w, A) - cl.covariant_derivative(w, w)
    out["spray_identity"] = check(_l2(gap) / _l2(ep.spray(w, A)), 1e-10)
    cfg = ep.SolverConfig(grid, spec, 1e-3, 0.1)
    traj = ep.integrate_eulerian(u * 0.1, cfg)
    e = traj.series("energy")
    out["energy_drift_short"] = check(abs(e[-1] - e[0]) / e[0], 1e-10)
    disp = _random_field(grid, rng, 2)
    # small enough that compositions stay resolved on the coarse suite grid
    phi = Diffeo(disp * (0.01 / np.max(np.abs(disp.values()))))
    G = lambda a, b: ep.metric_eval(phi, a, b, A)
    v1, v2 = _random_field(grid, rng, 3), _random_field(grid, rng, 3)
    out["metric_symmetry"] = check(abs(G(v1, v2) - G(v2, v1)) / abs(G(v1, v1)), 1e-10)
    return out


SUITES = ("spectral", "operators", "commutators", "conjugation", "epdiff")


def verify_all(seed: int = 0, suites: Optional[Sequence[str]] = None, n: int = MIN_SUITE_N) -> dict:
    """Run the named suites (all by default); the summary records every check."""
    if n < MIN_SUITE_N or n % 2:
        raise InvalidParameterError(f"suite resolution must be even and >= {MIN_SUITE_N}, got {n}")
    if seed < 0:
        raise InvalidParameterError("seed must be non-negative")
    names = list(SUITES) if not suites else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise InvalidParameterError(f"unknown suite(s): {', '.join(unknown)}")
    report = {}
    for name in names:
        rng = np.random.default_rng([seed, SUITES.index(name)])
        if name == "spectral":
            report[name] = spectral_suite(n, rng)
        elif name == "operators":
            report[name] = operators_suite(n, rng)
        elif name == "commutators":
            grid = TorusGrid(1, n)
            res = commutator_suite(grid, 2, 5, seed)
            res.update(splitting_suite(grid, rng))
            res.update(formula_suite(rng))
            report[name] = res
        elif name == "conjugation":
            grid = TorusGrid(1, n)
            A = realize(SymbolSpec("multiplier", 2, bessel_power(1.0)), grid)
            report[name] = conjugation_suite(A, seed)
        elif name == "epdiff":
            report[name] = epdiff_suite(n, rng)
    passed = all(c["pass"] for suite in report.values() for c in suite.values())
    failed = sorted(f"{s}.{k}" for s, suite in report.items() for k, c in suite.items() if not c["pass"])
    return {"seed": seed, "n": n, "suites": report, "passed": passed, "failed": failed}
