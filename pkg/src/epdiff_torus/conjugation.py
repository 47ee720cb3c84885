"""Conjugation of an operator by right translation, A_phi = R_phi A R_phi^{-1}.

The twisted operator is kept as an action (compose, apply, compose back);
a dense assembly exists for small 1-D diagnostics. Finite-difference
derivatives of phi -> A_phi v at the identity are compared with the
commutator formulas from :mod:`commutator_lab`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .commutator_lab import a_n_apply, covariant_derivative
from .errors import GridMismatchError, InvalidParameterError
from .operators import SpectralOperator, apply
from .spectral_core import (
    Diffeo,
    SpectralField,
    TorusGrid,
    compose,
    invert_diffeo,
)

__all__ = [
    "TwistedOperator",
    "twist",
    "perturbed_identity",
    "gateaux_fd",
    "second_gateaux_fd",
    "derivative_formula",
    "second_derivative_formula",
    "ConvergenceReport",
    "fd_convergence",
    "weighted_operator_norm",
    "EPS_LADDER",
    "ASSEMBLY_MAX_N",
]

EPS_LADDER = (1e-2, 5e-3, 2.5e-3)
ASSEMBLY_MAX_N = 64
INVERSE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TwistedOperator:
    """v -> (A (v o phi^-1)) o phi, with phi^-1 computed once at construction."""

    base: Union[SpectralOperator, "TwistedOperator"]
    phi: Diffeo
    phi_inv: Diffeo = field(repr=False)

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid

    @property
    def components(self) -> int:
        return self.base.components

    def apply(self, v: SpectralField) -> SpectralField:
        if v.grid != self.grid or v.components != self.components:
            raise GridMismatchError("twisted operator: field shape differs")
        pulled = compose(v, self.phi_inv)
        pushed = _apply_any(self.base, pulled)
        return compose(pushed, self.phi)

    __call__ = apply

    def assemble(self) -> np.ndarray:
        """Dense matrix on the band (1-D, n <= 64 only)."""
        grid = self.grid
        if grid.dim != 1 or grid.n > ASSEMBLY_MAX_N:
            raise InvalidParameterError(
                f"assembly is limited to d = 1, n <= {ASSEMBLY_MAX_N}"
            )
        size = self.components * grid.band_size
        cols = []
        for j in range(size):
            e = np.zeros(size, dtype=complex)
            e[j] = 1.0
            # complex basis vectors are fine: every step is complex-linear
            cols.append(_apply_vector(self, e))
        return np.stack(cols, axis=1)


def _apply_any(op, v: SpectralField) -> SpectralField:
    return op.apply(v) if isinstance(op, TwistedOperator) else apply(op, v)


def _apply_vector(op: TwistedOperator, vec: np.ndarray) -> np.ndarray:
    """Apply to an arbitrary complex band vector via its two real-field parts."""
    grid = op.grid
    # vec = a + i b with a, b coefficient vectors of real fields
    neg = np.concatenate([grid.neg_band_index + c * grid.band_size for c in range(op.components)])
    a = 0.5 * (vec + np.conj(vec[neg]))
    b = (vec - a) / 1j
    fa = op.apply(SpectralField.from_vector(grid, a, op.components)).to_vector()
    fb = op.apply(SpectralField.from_vector(grid, b, op.components)).to_vector()
    return fa + 1j * fb


def twist(
    A: Union[SpectralOperator, TwistedOperator], phi: Diffeo, tol: float = INVERSE_TOL
) -> TwistedOperator:
    """A_phi = R_phi A R_phi^{-1}."""
    if A.grid != phi.grid:
        raise GridMismatchError("twist: operator and diffeomorphism grids differ")
    return TwistedOperator(A, phi, invert_diffeo(phi, tol=tol))


def perturbed_identity(dphi: SpectralField, eps: float) -> Diffeo:
    """id + eps * dphi, checked for a positive Jacobian."""
    return Diffeo(dphi * eps)


def gateaux_fd(
    A: SpectralOperator,
    dphi: SpectralField,
    v: SpectralField,
    eps: float,
    tol: float = INVERSE_TOL,
) -> SpectralField:
    """Central difference (A_{id + eps dphi} v - A_{id - eps dphi} v) / (2 eps)."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")
    plus = twist(A, perturbed_identity(dphi, eps), tol).apply(v)
    minus = twist(A, perturbed_identity(dphi, -eps), tol).apply(v)
    return (plus - minus) / (2 * eps)


def second_gateaux_fd(
    A: SpectralOperator,
    dphi1: SpectralField,
    dphi2: SpectralField,
    v: SpectralField,
    eps: float,
    tol: float = INVERSE_TOL,
) -> SpectralField:
    """Mixed central difference of eps1, eps2 -> A_{id + eps1 dphi1 + eps2 dphi2} v at 0."""
    if eps <= 0:
        raise InvalidParameterError("eps must be positive")

    def at(s1, s2):
        phi = Diffeo(dphi1 * (s1 * eps) + dphi2 * (s2 * eps))
        return twist(A, phi, tol).apply(v)

    return (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * eps * eps)


def derivative_formula(A: SpectralOperator, dphi: SpectralField, v: SpectralField) -> SpectralField:
    """[nabla_dphi, A] v."""
    if not (A.grid == dphi.grid == v.grid):
        raise GridMismatchError("derivative_formula: grids differ")
    return covariant_derivative(dphi, apply(A, v)) - apply(A, covariant_derivative(dphi, v))


def second_derivative_formula(
    A: SpectralOperator, dphi1: SpectralField, dphi2: SpectralField, v: SpectralField
) -> SpectralField:
    """A_2(dphi1, dphi2) v from the recurrence."""
    return a_n_apply([dphi1, dphi2], A, v)


@dataclass
class ConvergenceReport:
    eps: list
    errors: list
    slope: float
    order: int

    def as_dict(self) -> dict:
        return {"order": self.order, "eps": self.eps, "errors": self.errors, "slope": self.slope}


def fd_convergence(
    A: SpectralOperator,
    dphis: Sequence[SpectralField],
    v: SpectralField,
    eps_ladder: Sequence[float] = EPS_LADDER,
    tol: float = 1e-13,
) -> ConvergenceReport:
    """L2 errors of the first (one direction) or mixed second (two directions)
    finite difference against the commutator formula, with the fitted log-log slope."""
    dphis = list(dphis)
    if len(dphis) == 1:
        exact = derivative_formula(A, dphis[0], v)
        approx = lambda e: gateaux_fd(A, dphis[0], v, e, tol)
    elif len(dphis) == 2:
        exact = second_derivative_formula(A, dphis[0], dphis[1], v)
        approx = lambda e: second_gateaux_fd(A, dphis[0], dphis[1], v, e, tol)
    else:
        raise InvalidParameterError("fd_convergence handles one or two directions")
    errors = [float(np.sqrt(np.sum(np.abs((approx(e) - exact).coeffs) ** 2))) for e in eps_ladder]
    slope = float(np.polyfit(np.log(eps_ladder), np.log(errors), 1)[0])
    return ConvergenceReport(list(map(float, eps_ladder)), errors, slope, len(dphis))


def weighted_operator_norm(
    op: Union[SpectralOperator, TwistedOperator],
    q: float,
    r: float,
    iterations: int = 200,
    rtol: float = 1e-10,
    seed: int = 0,
) -> float:
    """Operator norm H^q -> H^{q-r} on the band, by power iteration.

    Uses the matrix W_{q-r} M W_{-q} with W_s = diag(<k>^s), where M is the
    dense band matrix of ``op`` (assembled for twisted operators).
    """
    grid = op.grid
    if isinstance(op, TwistedOperator):
        mat = op.assemble()
    else:
        mat = op.to_dense()
    br = np.tile(np.sqrt(1.0 + np.sum(grid.band_freqs.astype(float) ** 2, axis=1)), op.components)
    B = (br ** (q - r))[:, None] * mat * (br ** (-q))[None, :]
    rng = np.random.default_rng(seed)
    x = rng.normal(size=B.shape[1]) + 0j
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iterations):
        y = B.conj().T @ (B @ x)
        new = float(np.sqrt(np.linalg.norm(y)))
        x = y / np.linalg.norm(y)
        if abs(new - sigma) <= rtol * new:
            sigma = new
            break
        sigma = new
    return sigma
