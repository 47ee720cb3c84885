"""Fourier analysis on the flat torus T^d = [0, 1)^d.

Fields are stored as truncated Fourier coefficients in FFT layout,

    f(x) = sum_k fhat(k) exp(2 pi i k.x),   fhat(k) = mean_j f(x_j) exp(-2 pi i k.x_j),

with the Nyquist rows (any |k_j| = N/2) held at zero so that derivatives are
skew-adjoint and real fields stay real. Quadratic products are dealiased by
zero-padding to 2N points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DiffeoInvariantError,
    GridMismatchError,
    InvalidParameterError,
    InversionError,
)

__all__ = [
    "TorusGrid",
    "SpectralField",
    "Diffeo",
    "stack_fields",
    "sobolev_norm",
    "pointwise_multiply",
    "partial_derivative",
    "evaluate",
    "compose",
    "composition_tail_energy",
    "invert_diffeo",
    "inverse_residual",
    "jacobian_det",
    "compose_diffeos",
    "torus_wrap",
]


def torus_wrap(x):
    """Map differences of positions to the representative in [-1/2, 1/2)."""
    return x - np.floor(x + 0.5)


@dataclass(frozen=True)
class TorusGrid:
    """Uniform collocation grid with ``n`` points per axis on T^dim."""

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise InvalidParameterError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise InvalidParameterError(f"n must be even and >= 8, got {self.n}")

    @property
    def cutoff(self) -> int:
        return self.n // 2

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)

    @cached_property
    def freqs(self) -> np.ndarray:
        """Integer frequency vectors, shape ``(dim, *shape)``."""
        return np.array(np.meshgrid(*([self.wavenumbers] * self.dim), indexing="ij"))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        return np.any(np.abs(self.freqs) == self.cutoff, axis=0)

    @cached_property
    def band_flat(self) -> np.ndarray:
        return np.flatnonzero(~self.nyquist_mask.ravel())

    @cached_property
    def band_freqs(self) -> np.ndarray:
        """Retained frequencies as rows, shape ``(B, dim)`` in band order."""
        return self.freqs.reshape(self.dim, -1)[:, self.band_flat].T.copy()

    @property
    def band_size(self) -> int:
        return (self.n - 1) ** self.dim

    @cached_property
    def band_lookup(self) -> dict:
        return {tuple(k): i for i, k in enumerate(self.band_freqs)}

    @cached_property
    def neg_band_index(self) -> np.ndarray:
        """Position of -k in band order for every band frequency k."""
        return np.array([self.band_lookup[tuple(-k)] for k in self.band_freqs])

    @cached_property
    def points(self) -> np.ndarray:
        """Collocation points ``x_j = j/n``, shape ``(dim, *shape)``."""
        ax = np.arange(self.n) / self.n
        return np.array(np.meshgrid(*([ax] * self.dim), indexing="ij"))

    @property
    def point_list(self) -> np.ndarray:
        """Collocation points as rows, shape ``(n**dim, dim)``."""
        return self.points.reshape(self.dim, -1).T

    def bracket(self, power: float = 1.0) -> np.ndarray:
        """<k>^power = (1 + |k|^2)^(power/2) in FFT layout."""
        return (1.0 + np.sum(self.freqs.astype(float) ** 2, axis=0)) ** (power / 2)

    def in_band(self, k) -> bool:
        return bool(np.all(np.abs(np.asarray(k)) <= self.cutoff - 1))

    def index_of(self, k) -> tuple:
        """FFT-layout index of integer frequency ``k`` (no band check)."""
        return tuple(int(kj) % self.n for kj in np.atleast_1d(k))

    def to_band(self, coeffs: np.ndarray) -> np.ndarray:
        c = coeffs.shape[0]
        return coeffs.reshape(c, -1)[:, self.band_flat].ravel()

    def from_band(self, vec: np.ndarray, components: int) -> np.ndarray:
        out = np.zeros((components, self.n**self.dim), dtype=complex)
        out[:, self.band_flat] = np.asarray(vec).reshape(components, -1)
        return out.reshape((components,) + self.shape)


def _band_axis_indices(n: int, m: int):
    k = np.arange(-n // 2 + 1, n // 2)
    return k % n, k % m


def _embed(coeffs: np.ndarray, grid: TorusGrid, m: int) -> np.ndarray:
    """Zero-pad band coefficients onto an m-point-per-axis layout."""
    src, dst = _band_axis_indices(grid.n, m)
    out = np.zeros((coeffs.shape[0],) + (m,) * grid.dim, dtype=complex)
    out[(slice(None),) + np.ix_(*([dst] * grid.dim))] = coeffs[
        (slice(None),) + np.ix_(*([src] * grid.dim))
    ]
    return out


def _restrict(coeffs_m: np.ndarray, grid: TorusGrid, m: int) -> np.ndarray:
    src, dst = _band_axis_indices(grid.n, m)
    out = np.zeros((coeffs_m.shape[0],) + grid.shape, dtype=complex)
    out[(slice(None),) + np.ix_(*([src] * grid.dim))] = coeffs_m[
        (slice(None),) + np.ix_(*([dst] * grid.dim))
    ]
    return out


def _axes(grid: TorusGrid) -> tuple:
    return tuple(range(1, grid.dim + 1))


def _values_on(coeffs: np.ndarray, grid: TorusGrid, m: int) -> np.ndarray:
    """Real samples of a band-limited field on an m-point grid."""
    padded = coeffs if m == grid.n else _embed(coeffs, grid, m)
    return np.fft.ifftn(padded, axes=_axes(grid)).real * m**grid.dim


def _coeffs_from(values: np.ndarray, grid: TorusGrid, m: int) -> np.ndarray:
    hat = np.fft.fftn(values, axes=_axes(grid)) / m**grid.dim
    return hat if m == grid.n else _restrict(hat, grid, m)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Vector-valued band-limited field with ``components`` entries.

    ``coeffs`` has shape ``(components, *grid.shape)`` in FFT layout. The
    Nyquist rows are zeroed on construction.
    """

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=complex)
        if arr.shape == self.grid.shape:
            arr = arr[np.newaxis]
        if arr.ndim != self.grid.dim + 1 or arr.shape[1:] != self.grid.shape:
            raise GridMismatchError(
                f"coefficient shape {arr.shape} does not fit grid {self.grid.shape}"
            )
        arr[:, self.grid.nyquist_mask] = 0.0
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def from_values(cls, grid: TorusGrid, values) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape == grid.shape:
            values = values[np.newaxis]
        return cls(grid, _coeffs_from(values, grid, grid.n))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "SpectralField":
        """Sample ``fn(*coords)`` at the collocation points.

        ``fn`` returns an array of grid shape or a sequence of them (one per
        component).
        """
        out = fn(*grid.points)
        if isinstance(out, (list, tuple)):
            out = np.stack([np.broadcast_to(o, grid.shape) for o in out])
        return cls.from_values(grid, np.broadcast_to(out, np.shape(out)))

    @classmethod
    def zeros(cls, grid: TorusGrid, components: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((components,) + grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid: TorusGrid, value) -> "SpectralField":
        value = np.atleast_1d(np.asarray(value, dtype=float))
        coeffs = np.zeros((value.size,) + grid.shape, dtype=complex)
        coeffs[(slice(None),) + (0,) * grid.dim] = value
        return cls(grid, coeffs)

    @classmethod
    def from_vector(cls, grid: TorusGrid, vec, components: int) -> "SpectralField":
        return cls(grid, grid.from_band(vec, components))

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    def values(self) -> np.ndarray:
        """Real samples at the collocation points, shape ``(c, *grid.shape)``."""
        return _values_on(self.coeffs, self.grid, self.grid.n)

    def to_vector(self) -> np.ndarray:
        return self.grid.to_band(self.coeffs)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i : i + 1])

    def mean(self) -> np.ndarray:
        """Integral over the torus of each component."""
        return self.coeffs[(slice(None),) + (0,) * self.grid.dim].real.copy()

    def reality_defect(self) -> float:
        """max |fhat(-k) - conj(fhat(k))| over the band."""
        axes = _axes(self.grid)
        flipped = np.roll(np.flip(self.coeffs, axis=axes), 1, axis=axes)
        return float(np.max(np.abs(flipped - np.conj(self.coeffs)), initial=0.0))

    def spectral_degree(self, tol: float = 1e-14) -> int:
        """Largest max-norm frequency carrying a coefficient above ``tol``."""
        mags = np.max(np.abs(self.coeffs), axis=0)
        if not np.any(mags > tol * max(1.0, mags.max())):
            return 0
        kmax = np.max(np.abs(self.grid.freqs), axis=0)
        return int(kmax[mags > tol * max(1.0, mags.max())].max())

    def _check(self, other: "SpectralField"):
        if self.grid != other.grid or self.components != other.components:
            raise GridMismatchError("fields differ in grid or component count")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self.grid, self.coeffs / scalar)

    def __repr__(self):
        return f"SpectralField(dim={self.grid.dim}, n={self.grid.n}, c={self.components})"


def stack_fields(fields) -> SpectralField:
    fields = list(fields)
    grid = fields[0].grid
    if any(f.grid != grid for f in fields):
        raise GridMismatchError("cannot stack fields from different grids")
    return SpectralField(grid, np.concatenate([f.coeffs for f in fields]))


def sobolev_norm(f: SpectralField, q: float) -> float:
    """H^q norm with weight <k>^q, summed over components."""
    if q < 0:
        raise InvalidParameterError(f"Sobolev index must be >= 0, got {q}")
    w = f.grid.bracket(2 * q)
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """L^2 pairing  int f . g dx  of real fields."""
    f._check(g)
    return float(np.sum(f.coeffs * np.conj(g.coeffs)).real)


def pointwise_multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased product f*g truncated to the band.

    ``f`` may be scalar and ``g`` vector-valued, in which case every
    component of ``g`` is multiplied by ``f``.
    """
    if f.grid != g.grid:
        raise GridMismatchError("pointwise_multiply: grids differ")
    if f.components not in (1, g.components):
        raise GridMismatchError(
            f"cannot multiply fields with {f.components} and {g.components} components"
        )
    grid = f.grid
    m = 2 * grid.n
    prod = _values_on(f.coeffs, grid, m) * _values_on(g.coeffs, grid, m)
    return SpectralField(grid, _coeffs_from(prod, grid, m))


def partial_derivative(f: SpectralField, axis: int) -> SpectralField:
    """D_axis f, i.e. multiplication of coefficients by 2 pi i k_axis (axis is 0-based)."""
    if not 0 <= axis < f.grid.dim:
        raise InvalidParameterError(f"axis {axis} out of range for dim {f.grid.dim}")
    return SpectralField(f.grid, f.coeffs * (2j * np.pi * f.grid.freqs[axis]))


def _as_points(grid: TorusGrid, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if grid.dim == 1 and pts.ndim == 1:
        pts = pts[:, np.newaxis]
    if pts.ndim != 2 or pts.shape[1] != grid.dim:
        raise InvalidParameterError(f"points must have shape (P, {grid.dim})")
    return np.mod(pts, 1.0)


def evaluate(f: SpectralField, points, chunk: int = 2048) -> np.ndarray:
    """Exact trigonometric interpolation of ``f`` at arbitrary points.

    Returns an array of shape ``(components, P)``.
    """
    grid = f.grid
    pts = _as_points(grid, points)
    src, _ = _band_axis_indices(grid.n, grid.n)
    kb = np.arange(-grid.n // 2 + 1, grid.n // 2)
    band = f.coeffs[(slice(None),) + np.ix_(*([src] * grid.dim))]
    out = np.empty((f.components, pts.shape[0]))
    for start in range(0, pts.shape[0], chunk):
        p = pts[start : start + chunk]
        e = [np.exp(2j * np.pi * np.outer(p[:, j], kb)) for j in range(grid.dim)]
        for c in range(f.components):
            if grid.dim == 1:
                vals = e[0] @ band[c]
            else:
                vals = np.sum((e[0] @ band[c]) * e[1], axis=1)
            out[c, start : start + chunk] = vals.real
    return out


@dataclass(frozen=True, eq=False)
class Diffeo:
    """Torus diffeomorphism phi = id + f stored through its displacement f."""

    displacement: SpectralField
    check: bool = True

    def __post_init__(self):
        f = self.displacement
        if f.components != f.grid.dim:
            raise GridMismatchError("displacement must have one component per axis")
        if self.check:
            jmin = float(jacobian_det(self).values().min())
            if not jmin > 0:
                raise DiffeoInvariantError(
                    f"Jacobian determinant not positive (min {jmin:.3e})", jmin
                )

    @property
    def grid(self) -> TorusGrid:
        return self.displacement.grid

    @classmethod
    def identity(cls, grid: TorusGrid) -> "Diffeo":
        return cls(SpectralField.zeros(grid, grid.dim), check=False)

    @classmethod
    def translation(cls, grid: TorusGrid, shift) -> "Diffeo":
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.dim,))
        return cls(SpectralField.constant(grid, shift), check=False)

    def __call__(self, points) -> np.ndarray:
        """phi(points) as unwrapped positions, shape ``(P, dim)``."""
        pts = _as_points(self.displacement.grid, points)
        return pts + evaluate(self.displacement, pts).T

    def positions(self) -> np.ndarray:
        """phi(x_j) at the collocation points, shape ``(dim, *shape)``."""
        return self.grid.points + self.displacement.values()

    def min_jacobian(self) -> float:
        return float(jacobian_det(self).values().min())


def jacobian_det(phi: Diffeo) -> SpectralField:
    """det(I + Df) as a dealiased scalar field."""
    f = phi.displacement
    grid = f.grid
    if grid.dim == 1:
        return SpectralField.constant(grid, 1.0) + partial_derivative(f, 0)
    d = [[partial_derivative(f.component(i), j) for j in range(2)] for i in range(2)]
    one = SpectralField.constant(grid, 1.0)
    return pointwise_multiply(one + d[0][0], one + d[1][1]) - pointwise_multiply(
        d[0][1], d[1][0]
    )


def compose(v: SpectralField, phi: Diffeo) -> SpectralField:
    """Band-limited re-projection of v o phi.

    ``v`` is evaluated exactly at the warped collocation points and the
    samples are transformed back; what the band cannot hold is discarded
    (see :func:`composition_tail_energy`).
    """
    if v.grid != phi.grid:
        raise GridMismatchError("compose: grids differ")
    grid = v.grid
    warped = phi.positions().reshape(grid.dim, -1).T
    vals = evaluate(v, warped).reshape((v.components,) + grid.shape)
    return SpectralField.from_values(grid, vals)


def composition_tail_energy(v: SpectralField, phi: Diffeo) -> float:
    """Energy of v o phi outside the band, measured on a 2N oversampled grid."""
    grid = v.grid
    m = 2 * grid.n
    fine = TorusGrid(grid.dim, m)
    disp = _values_on(phi.displacement.coeffs, grid, m)
    warped = (fine.points + disp).reshape(grid.dim, -1).T
    vals = evaluate(v, warped).reshape((v.components,) + fine.shape)
    hat = np.fft.fftn(vals, axes=_axes(grid)) / m**grid.dim
    outside = np.any(np.abs(fine.freqs) >= grid.cutoff, axis=0)
    return float(np.sum(np.abs(hat[:, outside]) ** 2))


def compose_diffeos(phi: Diffeo, psi: Diffeo) -> Diffeo:
    """phi o psi, whose displacement is g + f o psi."""
    return Diffeo(psi.displacement + compose(phi.displacement, psi))


def _displacement_jacobian_at(df, pts):
    d = len(df)
    jac = np.empty((pts.shape[0], d, d))
    for i in range(d):
        for j in range(d):
            jac[:, i, j] = evaluate(df[i][j], pts)[0]
        jac[:, i, i] += 1.0
    return jac


def invert_diffeo(
    phi: Diffeo,
    tol: float = 1e-12,
    max_iter: int = 100,
    initial: Diffeo | None = None,
) -> Diffeo:
    """Pointwise inverse of ``phi`` at the collocation points.

    Solves phi(y) = x_j per point, first by the damped fixed-point iteration
    y <- y - (phi(y) - x) while the residual is large, then by Newton steps.
    ``initial`` warm-starts the iteration.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    grid = phi.grid
    d = grid.dim
    f = phi.displacement
    x = grid.point_list
    df = [[partial_derivative(f.component(i), j) for j in range(d)] for i in range(d)]

    if initial is not None:
        y = x + initial.displacement.values().reshape(d, -1).T
    else:
        y = x - evaluate(f, x).T
    prev = np.inf
    use_newton = False
    for it in range(1, max_iter + 1):
        r = torus_wrap(y + evaluate(f, y).T - x)
        err = float(np.max(np.abs(r)))
        if err <= tol:
            break
        if not use_newton and (err < 1e-3 or err >= prev):
            use_newton = True
        prev = err
        if use_newton:
            jac = _displacement_jacobian_at(df, y)
            y = y - np.linalg.solve(jac, r[..., np.newaxis])[..., 0]
        else:
            y = y - r
    else:
        raise InversionError(
            f"inversion did not reach tol={tol:.1e} in {max_iter} iterations "
            f"(residual {err:.3e}); Jacobian may be near-degenerate",
            residual=err,
            iterations=max_iter,
        )
    disp = (y - x).T.reshape((d,) + grid.shape)
    return Diffeo(SpectralField.from_values(grid, disp), check=False)


def inverse_residual(phi: Diffeo, psi: Diffeo) -> float:
    """max_j |phi(psi(x_j)) - x_j| in the torus distance."""
    grid = phi.grid
    x = grid.point_list
    y = psi.positions().reshape(grid.dim, -1).T
    return float(np.max(np.abs(torus_wrap(phi(y) - x))))
