"""Symbols and their realization as operators on the truncated Fourier space.

A symbol a(x, k) is quantized in Kohn-Nirenberg form on Fourier series,

    (A u)(x) = sum_k exp(2 pi i k.x) a(x, k) uhat(k),

and re-projected onto the band. Writing phat(lam, k) for the x-Fourier
coefficients of a(., k), the realized matrix is M[xi, k] = phat(xi - k, k).
Frequency-diagonal symbols give a multiplier table; everything else a dense
matrix on the ``components * band_size`` coefficient vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (
    GridMismatchError,
    InvalidParameterError,
    RealityError,
    SingularOperatorError,
)
from .spectral_core import SpectralField, TorusGrid, _coeffs_from

__all__ = [
    "SymbolSpec",
    "SpectralOperator",
    "ValidationReport",
    "bessel_power",
    "poly",
    "realize",
    "apply",
    "solve",
    "commutator",
    "ad_D_alpha",
    "validate_symbol",
    "identity_operator",
    "derivative_operator",
    "multiplication_operator",
    "band_difference_index",
]

DENSE_CAP = 4096


def bessel_power(s: float) -> Callable:
    """k -> <k>^(2s) = (1 + |k|^2)^s."""

    def symbol(k):
        k = np.asarray(k, dtype=float)
        return (1.0 + np.sum(k**2, axis=0)) ** s

    symbol.tag = f"bessel_power({s!r})"
    return symbol


def poly(coeffs) -> Callable:
    """k -> sum_j coeffs[j] |k|^(2j)."""
    coeffs = [float(c) for c in coeffs]

    def symbol(k):
        k2 = np.sum(np.asarray(k, dtype=float) ** 2, axis=0)
        return sum(c * k2**j for j, c in enumerate(coeffs))

    symbol.tag = f"poly({coeffs!r})"
    return symbol


@dataclass(frozen=True, eq=False)
class SymbolSpec:
    """Description of an operator symbol.

    kind
        ``"multiplier"``: ``multiplier(k)`` with ``k`` an integer array of shape
        ``(d, ...)``; returns shape ``(...)`` (scalar, acts on every component
        alike) or ``(c, c, ...)`` (matrix-valued).
        ``"separable"``: a(x, k) = sum_m g_m(x) a_m(k) with ``terms`` a sequence of
        ``(g_m, a_m)`` pairs, ``g_m`` a scalar SpectralField.
        ``"gridded"``: ``values[x_index..., k_index...]`` sampled at the
        collocation points and FFT-layout frequencies of one grid.
    """

    kind: str
    order: float
    multiplier: Optional[Callable] = None
    terms: tuple = ()
    values: Optional[np.ndarray] = None
    hermitian: bool = True
    positive: bool = True
    elliptic: bool = True

    def __post_init__(self):
        if self.kind not in ("multiplier", "separable", "gridded"):
            raise InvalidParameterError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "multiplier" and self.multiplier is None:
            raise InvalidParameterError("multiplier symbol needs a callable")
        if self.kind == "separable" and not self.terms:
            raise InvalidParameterError("separable symbol needs at least one term")
        if self.kind == "gridded" and self.values is None:
            raise InvalidParameterError("gridded symbol needs a value table")
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other: "SymbolSpec") -> "SymbolSpec":
        """Sum of two multiplier or separable symbols."""
        if self.kind == other.kind == "multiplier":
            a, b = self.multiplier, other.multiplier
            return SymbolSpec(
                "multiplier", max(self.order, other.order), lambda k: a(k) + b(k)
            )
        if "gridded" in (self.kind, other.kind):
            raise InvalidParameterError("sums with gridded symbols are not supported")
        return SymbolSpec(
            "separable",
            max(self.order, other.order),
            terms=_as_terms(self) + _as_terms(other),
        )

    def sample(self, grid: TorusGrid) -> np.ndarray:
        """a(x_j, k) on the centered band.

        Shape ``(*x_shape, *k_shape)`` with ``k`` running over
        ``-n/2+1 .. n/2-1`` per axis; multipliers drop the x axes and may carry
        leading ``(c, c)`` matrix axes.
        """
        kc = _centered_band(grid)
        if self.kind == "multiplier":
            return _eval(self.multiplier, kc)
        if self.kind == "separable":
            xs = grid.dim * (slice(None),) + grid.dim * (np.newaxis,)
            ks = grid.dim * (np.newaxis,) + grid.dim * (slice(None),)
            total = 0.0
            for g, a in self.terms:
                total = total + g.values()[0][xs] * _eval(a, kc)[ks]
            return total
        vals = np.asarray(self.values)
        sel = np.arange(1, grid.n)
        shifted = np.fft.fftshift(vals, axes=tuple(range(grid.dim, 2 * grid.dim)))
        return shifted[(Ellipsis,) + np.ix_(*([sel] * grid.dim))]

    def x_fourier(self, grid: TorusGrid) -> Callable:
        """phat(lam, k): x-Fourier coefficient of a(., k) at integer frequency lam."""
        if self.kind == "multiplier":
            a = self.multiplier

            def phat(lam, k):
                lam = np.atleast_1d(lam)
                if np.any(lam != 0):
                    return 0.0 * _eval(a, _col(k))[..., 0]
                return _eval(a, _col(k))[..., 0]

            return phat

        if self.kind == "separable":
            terms = self.terms

            def phat(lam, k):
                total = 0.0
                for g, a in terms:
                    ghat = g.coeffs[0][grid.index_of(lam)] if grid.in_band(lam) else 0.0
                    total = total + ghat * _eval(a, _col(k))[..., 0]
                return total

            return phat

        hats = np.fft.fftn(np.asarray(self.values), axes=tuple(range(grid.dim))) / (
            grid.n**grid.dim
        )

        def phat(lam, k):
            if not (grid.in_band(lam) and grid.in_band(k)):
                return 0.0
            return hats[grid.index_of(lam) + grid.index_of(k)]

        return phat


def _as_terms(spec: SymbolSpec) -> tuple:
    if spec.kind == "separable":
        return spec.terms
    raise InvalidParameterError("only separable symbols can be merged termwise")


def _col(k):
    return np.asarray(k, dtype=float).reshape(-1, 1)


def _eval(a: Callable, k: np.ndarray) -> np.ndarray:
    """Evaluate a frequency symbol, broadcasting constant results over ``k``."""
    out = np.asarray(a(k))
    if out.ndim == 0:
        out = np.full(np.shape(k)[1:], out)
    return out


def _centered_band(grid: TorusGrid) -> np.ndarray:
    kb = np.arange(-grid.cutoff + 1, grid.cutoff)
    return np.array(np.meshgrid(*([kb] * grid.dim), indexing="ij"))


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Linear operator on band-limited fields with ``components`` entries.

    Exactly one of ``table`` (frequency multiplier) or ``matrix`` (dense, size
    ``components * band_size`` squared) is set. A table of shape
    ``grid.shape`` acts on each component alike; shape ``(c, c, *grid.shape)``
    is matrix-valued. ``order_tag`` is bookkeeping only.
    """

    grid: TorusGrid
    components: int
    table: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = None
    order_tag: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if (self.table is None) == (self.matrix is None):
            raise InvalidParameterError("give exactly one of table or matrix")
        size = self.components * self.grid.band_size
        if self.matrix is not None and self.matrix.shape != (size, size):
            raise GridMismatchError(f"dense matrix must be {size}x{size}")
        if self.table is not None and self.table.shape not in (
            self.grid.shape,
            (self.components, self.components) + self.grid.shape,
        ):
            raise GridMismatchError(f"bad multiplier table shape {self.table.shape}")

    @property
    def is_multiplier(self) -> bool:
        return self.table is not None

    @property
    def is_scalar_multiplier(self) -> bool:
        return self.table is not None and self.table.shape == self.grid.shape

    @property
    def shape(self) -> tuple:
        size = self.components * self.grid.band_size
        return (size, size)

    def _full_table(self) -> np.ndarray:
        if self.is_scalar_multiplier:
            eye = np.eye(self.components)
            return eye[(...,) + (np.newaxis,) * self.grid.dim] * self.table
        return self.table

    def to_dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        if "dense" not in self._cache:
            c, bf = self.components, self.grid.band_flat
            full = self._full_table().reshape(c, c, -1)[:, :, bf]
            blocks = [[np.diag(full[i, j]) for j in range(c)] for i in range(c)]
            self._cache["dense"] = np.block(blocks)
        return self._cache["dense"]

    def as_dense(self) -> "SpectralOperator":
        if self.matrix is not None:
            return self
        return SpectralOperator(
            self.grid, self.components, matrix=self.to_dense(), order_tag=self.order_tag
        )

    def _check(self, other: "SpectralOperator"):
        if self.grid != other.grid or self.components != other.components:
            raise GridMismatchError("operators differ in grid or component count")

    def __matmul__(self, other: "SpectralOperator") -> "SpectralOperator":
        self._check(other)
        order = self.order_tag + other.order_tag
        if self.is_multiplier and other.is_multiplier:
            if self.is_scalar_multiplier and other.is_scalar_multiplier:
                table = self.table * other.table
            else:
                table = np.einsum(
                    "ij...,jk...->ik...", self._full_table(), other._full_table()
                )
            return SpectralOperator(self.grid, self.components, table=table, order_tag=order)
        if self.is_scalar_multiplier:
            diag = self._band_diag()
            return self._dense(diag[:, None] * other.to_dense(), order)
        if other.is_scalar_multiplier:
            diag = other._band_diag()
            return self._dense(self.to_dense() * diag[None, :], order)
        return self._dense(self.to_dense() @ other.to_dense(), order)

    def _band_diag(self) -> np.ndarray:
        return np.tile(self.table.ravel()[self.grid.band_flat], self.components)

    def _dense(self, matrix, order) -> "SpectralOperator":
        return SpectralOperator(self.grid, self.components, matrix=matrix, order_tag=order)

    def _combine(self, other, sign) -> "SpectralOperator":
        self._check(other)
        order = max(self.order_tag, other.order_tag)
        if self.is_multiplier and other.is_multiplier:
            if self.is_scalar_multiplier and other.is_scalar_multiplier:
                table = self.table + sign * other.table
            else:
                table = self._full_table() + sign * other._full_table()
            return SpectralOperator(self.grid, self.components, table=table, order_tag=order)
        return self._dense(self.to_dense() + sign * other.to_dense(), order)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if self.is_multiplier:
            return SpectralOperator(
                self.grid, self.components, table=self.table * scalar, order_tag=self.order_tag
            )
        return self._dense(self.matrix * scalar, self.order_tag)

    __rmul__ = __mul__

    def norm(self) -> float:
        """Frobenius norm on the truncated basis."""
        if self.is_scalar_multiplier:
            band = self.table.ravel()[self.grid.band_flat]
            return float(np.sqrt(self.components * np.sum(np.abs(band) ** 2)))
        return float(np.linalg.norm(self.to_dense()))

    def with_order(self, order: float) -> "SpectralOperator":
        if self.is_multiplier:
            return SpectralOperator(self.grid, self.components, table=self.table, order_tag=order)
        return self._dense(self.matrix, order)

    def reality_defect(self) -> float:
        """max |M(-xi, -k) - conj M(xi, k)| over the dense representation."""
        m = self.to_dense()
        neg = self.grid.neg_band_index
        c, b = self.components, self.grid.band_size
        perm = (np.arange(c)[:, None] * b + neg[None, :]).ravel()
        return float(np.max(np.abs(m[np.ix_(perm, perm)] - np.conj(m)), initial=0.0))


def identity_operator(grid: TorusGrid, components: int = 1) -> SpectralOperator:
    return SpectralOperator(grid, components, table=np.ones(grid.shape, dtype=complex))


def derivative_operator(grid: TorusGrid, axis: int, components: int = 1) -> SpectralOperator:
    """D_axis = d/dx_axis as the multiplier 2 pi i k_axis."""
    if not 0 <= axis < grid.dim:
        raise InvalidParameterError(f"axis {axis} out of range for dim {grid.dim}")
    table = (2j * np.pi * grid.freqs[axis]).astype(complex)
    return SpectralOperator(grid, components, table=table, order_tag=1.0)


def band_difference_index(grid: TorusGrid):
    """FFT-layout indices of xi - k for all band pairs, plus the in-band mask."""
    bf = grid.band_freqs
    valid = np.ones((len(bf), len(bf)), dtype=bool)
    idx = []
    for j in range(grid.dim):
        diff = bf[:, None, j] - bf[None, :, j]
        valid &= np.abs(diff) <= grid.cutoff - 1
        idx.append(np.mod(diff, grid.n))
    return tuple(idx), valid


def _kron_components(mat: np.ndarray, components: int) -> np.ndarray:
    return mat if components == 1 else np.kron(np.eye(components), mat)


def multiplication_operator(f: SpectralField, components: int = 1) -> SpectralOperator:
    """Dense M_f: multiplication by the scalar field ``f`` followed by truncation."""
    if f.components != 1:
        raise GridMismatchError("multiplication_operator needs a scalar field")
    _check_dense_size(f.grid, components)
    idx, valid = band_difference_index(f.grid)
    mat = np.where(valid, f.coeffs[0][idx], 0.0)
    return SpectralOperator(f.grid, components, matrix=_kron_components(mat, components))


def _check_dense_size(grid: TorusGrid, components: int):
    if components * grid.band_size > DENSE_CAP:
        raise InvalidParameterError(
            f"dense operator of size {components * grid.band_size} exceeds cap {DENSE_CAP}"
        )


def _multiplier_table(spec: SymbolSpec, grid: TorusGrid) -> np.ndarray:
    table = np.array(_eval(spec.multiplier, grid.freqs), dtype=complex)
    table[(...,) + (grid.nyquist_mask,)] = 0.0
    return table


def _check_reality_table(table: np.ndarray, grid: TorusGrid):
    axes = tuple(range(table.ndim - grid.dim, table.ndim))
    flipped = np.roll(np.flip(table, axis=axes), 1, axis=axes)
    scale = max(1.0, float(np.max(np.abs(table))))
    if np.max(np.abs(flipped - np.conj(table))) > 1e-12 * scale:
        raise RealityError("symbol violates a(x, -k) = conj(a(x, k))")


def realize(spec: SymbolSpec, grid: TorusGrid, components: int = 1) -> SpectralOperator:
    """Kohn-Nirenberg realization of ``spec`` on ``grid``.

    Multipliers give a table; separable and gridded symbols give the dense
    matrix M[xi, k] = phat(xi - k, k), which is the exact band projection of
    the quantized symbol whose x-dependence is the trigonometric interpolant
    of its samples.
    """
    if spec.kind == "multiplier":
        table = _multiplier_table(spec, grid)
        if table.shape not in (grid.shape, (components, components) + grid.shape):
            raise GridMismatchError("matrix symbol size does not match components")
        _check_reality_table(table, grid)
        return SpectralOperator(grid, components, table=table, order_tag=spec.order)

    _check_dense_size(grid, components)
    idx, valid = band_difference_index(grid)
    bf = grid.band_freqs
    if spec.kind == "separable":
        mat = np.zeros((grid.band_size, grid.band_size), dtype=complex)
        for g, a in spec.terms:
            if g.grid != grid or g.components != 1:
                raise GridMismatchError("separable term field does not match grid")
            gmat = np.where(valid, g.coeffs[0][idx], 0.0)
            avals = _eval(a, bf.T.astype(float)).astype(complex)
            if np.max(np.abs(avals[grid.neg_band_index] - np.conj(avals))) > 1e-12 * max(
                1.0, np.max(np.abs(avals))
            ):
                raise RealityError("separable term a_m(k) violates the reality condition")
            mat += gmat * avals[None, :]
    else:
        vals = np.asarray(spec.values)
        if vals.shape != grid.shape * 2:
            raise GridMismatchError("gridded symbol table does not match grid")
        _check_reality_table(vals, grid)
        kcols = [grid.index_of(k) for k in bf]
        cols = np.stack([vals[(Ellipsis,) + kc] for kc in kcols])
        hats = _coeffs_from(cols, grid, grid.n)
        hats[:, grid.nyquist_mask] = 0.0
        b = np.arange(grid.band_size)
        mat = np.where(valid, hats[(b[None, :],) + idx], 0.0)
    return SpectralOperator(
        grid, components, matrix=_kron_components(mat, components), order_tag=spec.order
    )


def apply(A: SpectralOperator, f: SpectralField) -> SpectralField:
    if f.grid != A.grid or f.components != A.components:
        raise GridMismatchError("apply: operator and field shapes differ")
    if A.is_scalar_multiplier:
        return SpectralField(f.grid, f.coeffs * A.table)
    if A.is_multiplier:
        return SpectralField(f.grid, np.einsum("ij...,j...->i...", A.table, f.coeffs))
    return SpectralField.from_vector(f.grid, A.matrix @ f.to_vector(), f.components)


def solve(A: SpectralOperator, g: SpectralField) -> SpectralField:
    """Solve A f = g on the truncated space."""
    if g.grid != A.grid or g.components != A.components:
        raise GridMismatchError("solve: operator and field shapes differ")
    grid = A.grid
    if A.is_scalar_multiplier:
        band = A.table[~grid.nyquist_mask]
        smallest = float(np.min(np.abs(band)))
        if smallest == 0.0:
            raise SingularOperatorError("multiplier vanishes on the band", smallest)
        inv = np.zeros_like(A.table)
        inv[~grid.nyquist_mask] = 1.0 / band
        return SpectralField(grid, g.coeffs * inv)
    if A.is_multiplier:
        mats = np.moveaxis(A.table.reshape(A.components, A.components, -1), -1, 0)
        mats = mats[grid.band_flat]
        rhs = g.coeffs.reshape(A.components, -1)[:, grid.band_flat].T
        sv = np.linalg.svd(mats, compute_uv=False)
        if np.min(sv) <= 1e-14 * np.max(sv):
            raise SingularOperatorError("matrix multiplier singular on the band", float(sv.min()))
        sol = np.linalg.solve(mats, rhs[..., np.newaxis])[..., 0]
        out = np.zeros((A.components, grid.n**grid.dim), dtype=complex)
        out[:, grid.band_flat] = sol.T
        return SpectralField(grid, out.reshape(g.coeffs.shape))
    lu = A._cache.get("lu")
    if lu is None:
        lu = scipy.linalg.lu_factor(A.matrix, check_finite=False)
        A._cache["lu"] = lu
    rhs = g.to_vector()
    sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
    resid = np.linalg.norm(A.matrix @ sol - rhs)
    if not np.all(np.isfinite(sol)) or resid > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
        smallest = float(np.linalg.svd(A.matrix, compute_uv=False).min())
        raise SingularOperatorError(
            f"dense operator lost discrete ellipticity (smallest singular value {smallest:.3e})",
            smallest,
        )
    return SpectralField.from_vector(grid, sol, g.components)


def commutator(A: SpectralOperator, B: SpectralOperator) -> SpectralOperator:
    """[A, B] = AB - BA, tagged with order r_A + r_B - 1."""
    return (A @ B - B @ A).with_order(A.order_tag + B.order_tag - 1)


def ad_D_alpha(A: SpectralOperator, alpha, max_order: int = 4) -> SpectralOperator:
    """ad_{D_1}^{alpha_1} ... ad_{D_d}^{alpha_d} A."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != A.grid.dim or any(a < 0 for a in alpha):
        raise InvalidParameterError(f"bad multi-index {alpha}")
    if sum(alpha) > max_order:
        raise InvalidParameterError(f"|alpha| = {sum(alpha)} exceeds bound {max_order}")
    out = A
    for axis in reversed(range(A.grid.dim)):
        D = derivative_operator(A.grid, axis, A.components)
        for _ in range(alpha[axis]):
            out = commutator(D, out).with_order(out.order_tag)
    return out


@dataclass
class ValidationReport:
    hermitian: bool
    reality: bool
    positive: bool
    min_eigenvalue: float
    ellipticity_constant: float
    class_constants: dict

    @property
    def elliptic(self) -> bool:
        return bool(np.isfinite(self.ellipticity_constant))

    @property
    def admissible(self) -> bool:
        """Hermitian, positive and (discretely) elliptic: usable as inertia operator."""
        return self.hermitian and self.reality and self.positive and self.elliptic

    def as_dict(self) -> dict:
        return {
            "hermitian": self.hermitian,
            "reality": self.reality,
            "positive": self.positive,
            "elliptic": self.elliptic,
            "min_eigenvalue": self.min_eigenvalue,
            "ellipticity_constant": self.ellipticity_constant,
            "class_constants": dict(self.class_constants),
        }


def _x_derivative_samples(spec: SymbolSpec, grid: TorusGrid, axis: int) -> np.ndarray:
    if spec.kind == "multiplier":
        return np.zeros_like(spec.sample(grid))
    if spec.kind == "separable":
        from .spectral_core import partial_derivative

        terms = tuple((partial_derivative(g, axis), a) for g, a in spec.terms)
        return SymbolSpec("separable", spec.order, terms=terms).sample(grid)
    vals = np.asarray(spec.values)
    hat = np.fft.fftn(vals, axes=tuple(range(grid.dim)))
    k = grid.freqs[axis][(Ellipsis,) + (np.newaxis,) * grid.dim]
    dvals = np.fft.ifftn(hat * 2j * np.pi * k, axes=tuple(range(grid.dim)))
    return SymbolSpec("gridded", spec.order, values=dvals).sample(grid)


def validate_symbol(spec: SymbolSpec, r: float, grid: TorusGrid) -> ValidationReport:
    """Check hermiticity, positivity and discrete ellipticity of ``spec`` on ``grid``.

    Symbol-class constants C_{alpha,beta} = max |d_x^beta Delta_k^alpha a| / <k>^(r-|alpha|)
    use forward differences in k (|alpha| <= 2) and spectral x-derivatives
    (|beta| <= 1). Everything is measured on the stored band only.
    """
    a = spec.sample(grid)
    kc = _centered_band(grid)
    bracket = (1.0 + np.sum(kc.astype(float) ** 2, axis=0)) ** 0.5
    matrix_valued = spec.kind == "multiplier" and a.ndim == grid.dim + 2
    if matrix_valued:
        mats = np.moveaxis(a.reshape(a.shape[0], a.shape[1], -1), -1, 0)
        scale = max(1.0, float(np.max(np.abs(mats))))
        hermitian = bool(np.max(np.abs(mats - np.conj(np.swapaxes(mats, 1, 2)))) <= 1e-12 * scale)
        herm = 0.5 * (mats + np.conj(np.swapaxes(mats, 1, 2)))
        min_eig = float(np.min(np.linalg.eigvalsh(herm)))
        sv = np.linalg.svd(mats, compute_uv=False)
        inv_norm = np.where(sv[:, -1] > 0, 1.0 / np.where(sv[:, -1] > 0, sv[:, -1], 1.0), np.inf)
        ce = float(np.max(inv_norm * bracket.ravel() ** r))
        neg = a[(Ellipsis,) + (slice(None, None, -1),) * grid.dim]
        reality = bool(np.max(np.abs(neg - np.conj(a))) <= 1e-12 * scale)
        entry_abs = lambda arr: np.sqrt(np.sum(np.abs(arr) ** 2, axis=(0, 1)))
        k_axes_offset = 2
    else:
        scale = max(1.0, float(np.max(np.abs(a))))
        hermitian = bool(np.max(np.abs(np.imag(a))) <= 1e-12 * scale)
        min_eig = float(np.min(np.real(a)))
        absa = np.abs(a)
        with np.errstate(divide="ignore"):
            inv = np.where(absa > 0, 1.0 / np.where(absa > 0, absa, 1.0), np.inf)
        kb = bracket[(np.newaxis,) * (a.ndim - grid.dim)] if a.ndim > grid.dim else bracket
        ce = float(np.max(inv * kb**r))
        kflip = (slice(None),) * (a.ndim - grid.dim) + (slice(None, None, -1),) * grid.dim
        reality = bool(np.max(np.abs(a[kflip] - np.conj(a))) <= 1e-12 * scale)
        entry_abs = np.abs
        k_axes_offset = a.ndim - grid.dim

    constants = {}
    betas = [(0,) * grid.dim] + [
        tuple(int(i == j) for i in range(grid.dim)) for j in range(grid.dim)
    ]
    alphas = [al for al in np.ndindex(*(3,) * grid.dim) if sum(al) <= 2]
    for beta in betas:
        base = a if sum(beta) == 0 else _x_derivative_samples(spec, grid, beta.index(1))
        for alpha in alphas:
            diff = base
            br = bracket
            for axis, times in enumerate(alpha):
                for _ in range(times):
                    diff = np.diff(diff, axis=k_axes_offset + axis)
                    br = br[tuple(slice(0, -1) if i == axis else slice(None) for i in range(grid.dim))]
            weight = br ** (r - sum(alpha))
            vals = entry_abs(diff)
            if vals.ndim > grid.dim:
                vals = vals.reshape((-1,) + vals.shape[-grid.dim :]).max(axis=0)
            constants[f"alpha={alpha},beta={beta}"] = float(np.max(vals / weight))
    return ValidationReport(
        hermitian=hermitian,
        reality=reality,
        positive=min_eig > 0,
        min_eigenvalue=min_eig,
        ellipticity_constant=ce,
        class_constants=constants,
    )
