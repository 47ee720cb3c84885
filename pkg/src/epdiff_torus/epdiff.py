"""EPDiff geodesics on the torus diffeomorphism group.

Eulerian form: u_t = -A^{-1}{ nabla_u m + (grad u)^T m + (div u) m },  m = A u.
Lagrangian form: phi_t = v, v_t = S(v o phi^{-1}) o phi with the spray S.

All quadratic products are dealiased, so the semi-discrete Galerkin system
conserves the energy 1/2 <A u, u> exactly; drift measured in a run comes from
the time stepper alone.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .commutator_lab import covariant_derivative
from .conjugation import twist
from .errors import BlowUpSuspected, DiffeoInvariantError, InvalidParameterError, InversionError
from .operators import SpectralOperator, SymbolSpec, apply, realize, solve, validate_symbol
from .spectral_core import (
    Diffeo,
    SpectralField,
    TorusGrid,
    _values_on,
    compose,
    inner_product,
    invert_diffeo,
    jacobian_det,
    partial_derivative,
    pointwise_multiply,
    sobolev_norm,
    torus_wrap,
)

__all__ = [
    "momentum",
    "euler_arnold_rhs",
    "spray",
    "metric_eval",
    "kinetic_energy",
    "momentum_integral",
    "GeodesicState",
    "SolverConfig",
    "GeodesicTrajectory",
    "energy",
    "integrate_eulerian",
    "integrate_lagrangian",
    "ShootOptions",
    "ShootResult",
    "shoot",
    "coarse_modes",
    "field_from_params",
    "params_from_field",
    "GROWTH_LIMIT",
    "CFL_LIMIT",
]

GROWTH_LIMIT = 1e6
CFL_LIMIT = 0.5


def _check(u: SpectralField, A: SpectralOperator):
    if u.grid != A.grid or u.components != A.components or u.components != u.grid.dim:
        raise InvalidParameterError("velocity must be a vector field matching the operator")


def momentum(u: SpectralField, A: SpectralOperator) -> SpectralField:
    """m = A u."""
    _check(u, A)
    return apply(A, u)


def _transport_terms(u: SpectralField, m: SpectralField) -> SpectralField:
    """nabla_u m + (grad u)^T m + (div u) m, all products dealiased."""
    d = u.grid.dim
    out = covariant_derivative(u, m)
    div = SpectralField.zeros(u.grid, 1)
    comps = []
    for i in range(d):
        acc = SpectralField.zeros(u.grid, 1)
        for j in range(d):
            # ((grad u)^T m)_i = sum_j d_i u^j m^j
            acc = acc + pointwise_multiply(partial_derivative(u.component(j), i), m.component(j))
        comps.append(acc.coeffs[0])
        div = div + partial_derivative(u.component(i), i)
    out = out + SpectralField(u.grid, np.stack(comps))
    return out + pointwise_multiply(div, m)


def euler_arnold_rhs(u: SpectralField, A: SpectralOperator) -> SpectralField:
    m = momentum(u, A)
    return -solve(A, _transport_terms(u, m))


def spray(u: SpectralField, A: SpectralOperator) -> SpectralField:
    """S(u) = A^{-1}{ [A, nabla_u] u - (grad u)^T A u - (div u) A u }."""
    m = momentum(u, A)
    nab_u = covariant_derivative(u, u)
    bracket = apply(A, nab_u) - covariant_derivative(u, m)
    rest = _transport_terms(u, m) - covariant_derivative(u, m)
    return solve(A, bracket - rest)


def _padded_mean(fields: Sequence[SpectralField]) -> float:
    """Exact mean of a product of up to three band-limited scalar fields."""
    grid = fields[0].grid
    m = 2 * grid.n
    vals = np.ones((m,) * grid.dim)
    for f in fields:
        vals = vals * _values_on(f.coeffs, grid, m)[0]
    return float(np.mean(vals))


def metric_eval(phi: Diffeo, v1: SpectralField, v2: SpectralField, A: SpectralOperator) -> float:
    """G_phi(v1, v2) = int (A_phi v1 . v2) J_phi dx."""
    _check(v1, A)
    _check(v2, A)
    jac = jacobian_det(phi)
    Av1 = twist(A, phi).apply(v1)
    return sum(
        _padded_mean([Av1.component(i), v2.component(i), jac]) for i in range(v1.components)
    )


def kinetic_energy(u: SpectralField, A: SpectralOperator) -> float:
    """1/2 G_id(u, u), computed spectrally."""
    return 0.5 * inner_product(momentum(u, A), u)


def momentum_integral(u: SpectralField, A: SpectralOperator) -> np.ndarray:
    """int m dx per component."""
    return momentum(u, A).mean()


# ---------------------------------------------------------------- configuration and trajectories


@dataclass(frozen=True)
class SolverConfig:
    grid: TorusGrid
    inertia: SymbolSpec
    dt: float
    t_end: float
    integrator: str = "rk4"
    cadence: int = 1
    q: Optional[float] = None
    validate: bool = True

    def __post_init__(self):
        if not self.dt > 0 or not self.t_end > 0:
            raise InvalidParameterError("dt and t_end must be positive")
        if self.dt > self.t_end:
            raise InvalidParameterError("dt must not exceed t_end")
        if self.integrator not in ("rk4", "midpoint"):
            raise InvalidParameterError(f"unknown integrator {self.integrator!r}")
        if self.cadence < 1:
            raise InvalidParameterError("cadence must be >= 1")
        if self.inertia.order < 1:
            raise InvalidParameterError("inertia order 2s must satisfy s >= 1/2")
        if self.validate:
            report = validate_symbol(self.inertia, self.inertia.order, self.grid)
            if not report.admissible:
                raise InvalidParameterError(
                    "inertia symbol must be Hermitian, positive and elliptic"
                )

    @property
    def s(self) -> float:
        return self.inertia.order / 2

    @property
    def norm_index(self) -> float:
        """Diagnostic Sobolev index, max(2s, d/2 + 1.1) unless set."""
        if self.q is not None:
            return self.q
        return max(2 * self.s, self.grid.dim / 2 + 1.1)

    def operator(self) -> SpectralOperator:
        return realize(self.inertia, self.grid, components=self.grid.dim)

    def step_times(self) -> list:
        steps = max(1, int(math.ceil(self.t_end / self.dt - 1e-9)))
        times = [min((k + 1) * self.dt, self.t_end) for k in range(steps)]
        times[-1] = self.t_end
        return times


@dataclass
class GeodesicState:
    t: float
    u: Optional[SpectralField] = None
    phi: Optional[Diffeo] = None
    v: Optional[SpectralField] = None

    def __post_init__(self):
        if self.u is None and (self.phi is None or self.v is None):
            raise InvalidParameterError("state needs u or the pair (phi, v)")

    def eulerian(self, inverse: Optional[Diffeo] = None) -> SpectralField:
        if self.u is not None:
            return self.u
        inv = inverse if inverse is not None else invert_diffeo(self.phi)
        return compose(self.v, inv)


DIAGNOSTIC_COLUMNS = ("energy", "momentum_int", "hq_norm", "linf_u", "step_residual")


@dataclass
class GeodesicTrajectory:
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def append(self, state: GeodesicState, diag: dict):
        if self.states and not state.t > self.states[-1].t:
            raise InvalidParameterError("trajectory times must increase strictly")
        self.states.append(state)
        self.diagnostics.append(diag)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def series(self, key: str) -> np.ndarray:
        return np.array([d[key] for d in self.diagnostics])

    @property
    def final(self) -> GeodesicState:
        return self.states[-1]

    def to_csv(self) -> str:
        if not self.states:
            return ""
        d = len(self.diagnostics[0]["momentum_int"])
        header = ["t", "energy"] + [f"momentum_int_{i + 1}" for i in range(d)]
        header += ["hq_norm", "linf_u", "step_residual"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        fmt = lambda x: f"{float(x):.16e}"
        for state, diag in zip(self.states, self.diagnostics):
            row = [fmt(state.t), fmt(diag["energy"])]
            row += [fmt(x) for x in diag["momentum_int"]]
            row += [fmt(diag["hq_norm"]), fmt(diag["linf_u"]), fmt(diag["step_residual"])]
            writer.writerow(row)
        return buf.getvalue()


def _diagnostics(u: SpectralField, A: SpectralOperator, q: float, e_prev: Optional[float]) -> dict:
    e = kinetic_energy(u, A)
    ref = e_prev if e_prev else 1.0
    return {
        "energy": e,
        "momentum_int": [float(x) for x in momentum_integral(u, A)],
        "hq_norm": sobolev_norm(u, q),
        "linf_u": float(np.max(np.abs(u.values()))),
        # relative energy change over the last step; zero at the initial state
        "step_residual": 0.0 if e_prev is None else abs(e - e_prev) / abs(ref),
    }


def energy(traj: GeodesicTrajectory, A: SpectralOperator) -> np.ndarray:
    """1/2 G_id(u, u) for every state of a trajectory."""
    out = []
    for state in traj.states:
        out.append(kinetic_energy(state.eulerian(), A))
    return np.array(out)


def _rk_step(rhs: Callable, y, h: float, method: str):
    """One explicit step; ``y`` is a tuple of SpectralFields."""
    add = lambda a, b, c: tuple(x + z * c for x, z in zip(a, b))
    if method == "midpoint":
        k1 = rhs(y)
        return add(y, rhs(add(y, k1, h / 2)), h)
    k1 = rhs(y)
    k2 = rhs(add(y, k1, h / 2))
    k3 = rhs(add(y, k2, h / 2))
    k4 = rhs(add(y, k3, h))
    return tuple(
        x + (a + b * 2 + c * 2 + e) * (h / 6) for x, a, b, c, e in zip(y, k1, k2, k3, k4)
    )


def _guard(u: SpectralField, h: float, t: float, hq0: float, history: list, traj, q: float):
    hq = sobolev_norm(u, q)
    history.append(hq)
    if not np.isfinite(hq) or (hq0 > 0 and hq > GROWTH_LIMIT * hq0):
        err = BlowUpSuspected(
            f"H^{q:g} norm grew past {GROWTH_LIMIT:g} x initial at t = {t:.6g}", t, history
        )
        err.trajectory = traj
        raise err
    umax = float(np.max(np.abs(u.values())))
    if h * umax > CFL_LIMIT * u.grid.spacing:
        err = BlowUpSuspected(
            f"CFL guard: dt * max|u| = {h * umax:.3e} exceeds {CFL_LIMIT} grid spacings "
            f"at t = {t:.6g}",
            t,
            history,
        )
        err.trajectory = traj
        raise err


def integrate_eulerian(u0: SpectralField, cfg: SolverConfig, A: Optional[SpectralOperator] = None):
    """Fixed-step RK4 / midpoint integration of the Euler-Arnold equation."""
    A = A if A is not None else cfg.operator()
    _check(u0, A)
    q = cfg.norm_index
    traj = GeodesicTrajectory()
    traj.append(GeodesicState(0.0, u=u0), _diagnostics(u0, A, q, None))
    hq0 = sobolev_norm(u0, q)
    history = [hq0]
    rhs = lambda y: (euler_arnold_rhs(y[0], A),)
    u, t, e_prev = u0, 0.0, kinetic_energy(u0, A)
    times = cfg.step_times()
    for step, t_next in enumerate(times, start=1):
        h = t_next - t
        _guard(u, h, t, hq0, history, traj, q)
        (u,) = _rk_step(rhs, (u,), h, cfg.integrator)
        t = t_next
        if step % cfg.cadence == 0 or step == len(times):
            diag = _diagnostics(u, A, q, e_prev)
            traj.append(GeodesicState(t, u=u), diag)
        e_prev = kinetic_energy(u, A)
    _guard(u, 0.0, t, hq0, history, traj, q)
    return traj


def integrate_lagrangian(v0: SpectralField, cfg: SolverConfig, A: Optional[SpectralOperator] = None):
    """Integrate phi_t = v, v_t = S(v o phi^{-1}) o phi from (id, v0).

    The state carries the displacement f = phi - id; each stage inverts phi,
    warm-started from the previous inverse.
    """
    A = A if A is not None else cfg.operator()
    _check(v0, A)
    q = cfg.norm_index
    grid = v0.grid
    cache = {"inv": Diffeo.identity(grid)}

    def rhs(y):
        f, v = y
        phi = Diffeo(f)
        inv = invert_diffeo(phi, tol=1e-12, initial=cache["inv"])
        cache["inv"] = inv
        return v, compose(spray(compose(v, inv), A), phi)

    traj = GeodesicTrajectory()
    f0 = SpectralField.zeros(grid, grid.dim)
    traj.append(
        GeodesicState(0.0, phi=Diffeo.identity(grid), v=v0, u=v0), _diagnostics(v0, A, q, None)
    )
    hq0 = sobolev_norm(v0, q)
    history = [hq0]
    y, t = (f0, v0), 0.0
    e_prev = kinetic_energy(v0, A)
    times = cfg.step_times()
    for step, t_next in enumerate(times, start=1):
        h = t_next - t
        _guard(y[1], h, t, hq0, history, traj, q)
        y = _rk_step(rhs, y, h, cfg.integrator)
        t = t_next
        phi = Diffeo(y[0])
        inv = invert_diffeo(phi, tol=1e-12, initial=cache["inv"])
        cache["inv"] = inv
        u = compose(y[1], inv)
        if step % cfg.cadence == 0 or step == len(times):
            traj.append(GeodesicState(t, u=u, phi=phi, v=y[1]), _diagnostics(u, A, q, e_prev))
        e_prev = kinetic_energy(u, A)
    return traj


# ---------------------------------------------------------------- shooting


SHOOT_MODES = 4


def coarse_modes(grid: TorusGrid, limit: int = SHOOT_MODES) -> np.ndarray:
    """Half-lattice of frequencies with max-norm <= limit (k = 0 first, one of each +-k pair)."""
    if limit >= grid.cutoff:
        raise InvalidParameterError("shooting modes exceed the band")
    ks = [k for k in grid.band_freqs if np.max(np.abs(k)) <= limit]
    half = [k for k in ks if tuple(k) > tuple(-k) or not np.any(k)]
    half.sort(key=lambda k: (np.max(np.abs(k)), tuple(k)))
    return np.array(half)


def field_from_params(grid: TorusGrid, params: np.ndarray, limit: int = SHOOT_MODES) -> SpectralField:
    """Real vector field from (mean, cos, sin) coefficients on the coarse modes."""
    modes = coarse_modes(grid, limit)
    d = grid.dim
    per = 2 * len(modes) - 1
    params = np.asarray(params, dtype=float).reshape(d, per)
    coeffs = np.zeros((d,) + grid.shape, dtype=complex)
    for c in range(d):
        coeffs[(c,) + grid.index_of(modes[0])] = params[c, 0]
        for i, k in enumerate(modes[1:]):
            a, b = params[c, 1 + 2 * i], params[c, 2 + 2 * i]
            # a cos(2 pi k.x) + b sin(2 pi k.x)
            coeffs[(c,) + grid.index_of(k)] = 0.5 * (a - 1j * b)
            coeffs[(c,) + grid.index_of(-k)] = 0.5 * (a + 1j * b)
    return SpectralField(grid, coeffs)


def params_from_field(u: SpectralField, limit: int = SHOOT_MODES) -> np.ndarray:
    grid = u.grid
    modes = coarse_modes(grid, limit)
    out = []
    for c in range(u.components):
        out.append(u.coeffs[(c,) + grid.index_of(modes[0])].real)
        for k in modes[1:]:
            z = u.coeffs[(c,) + grid.index_of(k)]
            out.extend([2 * z.real, -2 * z.imag])
    return np.array(out, dtype=float)


@dataclass(frozen=True)
class ShootOptions:
    max_iter: int = 30
    step: float = 1.0
    tol: float = 1e-12
    fd_step: float = 1e-7
    modes: int = SHOOT_MODES


@dataclass
class ShootResult:
    u0: SpectralField
    residual: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.u0, self.residual))


def _endpoint_residual(params, target: Diffeo, cfg: SolverConfig, A, limit) -> np.ndarray:
    grid = cfg.grid
    u0 = field_from_params(grid, params, limit)
    final = integrate_lagrangian(u0, cfg, A).final
    gap = torus_wrap(final.phi.displacement.values() - target.displacement.values())
    return gap.ravel() / math.sqrt(grid.n**grid.dim)


def shoot(
    phi_target: Diffeo,
    cfg: SolverConfig,
    opt: ShootOptions = ShootOptions(),
    initial: Optional[SpectralField] = None,
) -> ShootResult:
    """Initial velocity whose time-``t_end`` geodesic flow reaches ``phi_target``.

    Minimizes the squared L2 torus distance of displacements over the coarse
    mode parameterization by Levenberg-Marquardt with a forward-difference
    Jacobian. ``residual`` is the L2 displacement distance at the returned u0.
    """
    grid = cfg.grid
    if phi_target.grid != grid:
        raise InvalidParameterError("target and solver grids differ")
    A = cfg.operator()
    limit = opt.modes
    x = (
        params_from_field(initial, limit)
        if initial is not None
        else np.zeros(grid.dim * (2 * len(coarse_modes(grid, limit)) - 1))
    )
    res = _endpoint_residual(x, phi_target, cfg, A, limit)
    cost = float(res @ res)
    history = [math.sqrt(cost)]
    mu = 1e-3
    it = 0
    converged = math.sqrt(cost) <= opt.tol
    while not converged and it < opt.max_iter:
        it += 1
        jac = np.empty((res.size, x.size))
        for i in range(x.size):
            xp = x.copy()
            xp[i] += opt.fd_step
            jac[:, i] = (_endpoint_residual(xp, phi_target, cfg, A, limit) - res) / opt.fd_step
        jtj = jac.T @ jac
        grad = jac.T @ res
        improved = False
        for _ in range(12):
            delta = np.linalg.solve(jtj + mu * np.diag(np.diag(jtj) + 1e-12), -grad)
            trial = x + opt.step * delta
            try:
                trial_res = _endpoint_residual(trial, phi_target, cfg, A, limit)
            except (BlowUpSuspected, DiffeoInvariantError, InversionError):
                # the trial velocity left the region the flow can represent
                mu *= 10
                continue
            trial_cost = float(trial_res @ trial_res)
            if trial_cost < cost:
                x, res, cost = trial, trial_res, trial_cost
                mu = max(mu / 10, 1e-12)
                improved = True
                break
            mu *= 10
        history.append(math.sqrt(cost))
        if math.sqrt(cost) <= opt.tol:
            converged = True
        elif not improved:
            break
    return ShootResult(field_from_params(grid, x, limit), math.sqrt(cost), converged, it, history)
