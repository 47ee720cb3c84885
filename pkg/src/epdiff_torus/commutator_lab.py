"""Commutator calculus for derivatives of conjugated operators.

Everything here works with dense operators on the truncated Fourier basis.
Multiplication operators on a truncated space only commute, and only
compose like pointwise products, for coefficients that never reach the band
edge. Identity checks therefore compare operators on the *interior block*:
rows and columns with max-norm frequency at most ``cutoff - 1 - margin``,
where ``margin`` bounds the total frequency degree of the fields involved.
On that block the truncated operators agree exactly with their
infinite-dimensional counterparts (see :func:`interior_residual`).
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GridMismatchError, InvalidParameterError
from .operators import (
    SpectralOperator,
    apply,
    commutator,
    derivative_operator,
    identity_operator,
    multiplication_operator,
)
from .spectral_core import (
    SpectralField,
    TorusGrid,
    partial_derivative,
    pointwise_multiply,
    sobolev_norm,
)

__all__ = [
    "mult_op",
    "nested_commutator",
    "nested_commutator_apply",
    "rec_j",
    "nabla_operator",
    "covariant_derivative",
    "a_n",
    "a_n_apply",
    "FieldRef",
    "TermDescriptor",
    "split_terms",
    "evaluate_split",
    "p_hat_n",
    "symbol_formula_check",
    "ProbeReport",
    "boundedness_probe",
    "probe_ladder",
    "pn_estimate_constant",
    "probe_field",
    "probe_input_limit",
    "x_bandwidth",
    "interior_residual",
    "random_trig_field",
    "random_band_limited_operator",
    "identity_residuals",
]

MAX_AN_ORDER = 3


# ---------------------------------------------------------------- building blocks


def _product(fs: Sequence[SpectralField]) -> SpectralField:
    out = fs[0]
    for f in fs[1:]:
        out = pointwise_multiply(out, f)
    return out


def mult_op(fs: Sequence[SpectralField], components: int = 1) -> SpectralOperator:
    """M_n(f_1, ..., f_n): multiplication by the dealiased product f_1 ... f_n."""
    fs = list(fs)
    if not fs:
        raise InvalidParameterError("mult_op needs at least one field")
    if any(f.grid != fs[0].grid for f in fs):
        raise GridMismatchError("mult_op: fields on different grids")
    return multiplication_operator(_product(fs), components)


def nested_commutator(fs: Sequence[SpectralField], P: SpectralOperator) -> SpectralOperator:
    """S_{n,P}(f_1, ..., f_n) = [f_1, [f_2, ... [f_n, P] ...]]; S_{0,P} = P."""
    out = P
    for f in reversed(list(fs)):
        if f.grid != P.grid:
            raise GridMismatchError("nested_commutator: field and operator grids differ")
        out = commutator(multiplication_operator(f, P.components), out).with_order(
            out.order_tag
        )
    return out


def nested_commutator_apply(
    fs: Sequence[SpectralField], P: SpectralOperator, w: SpectralField
) -> SpectralField:
    """S_{n,P}(f_1, ..., f_n) w without assembling any matrix."""
    fs = list(fs)
    if not fs:
        return apply(P, w)
    head, rest = fs[0], fs[1:]
    return pointwise_multiply(head, nested_commutator_apply(rest, P, w)) - (
        nested_commutator_apply(rest, P, pointwise_multiply(head, w))
    )


def rec_j(
    Pn: Callable[[list], SpectralOperator],
    fs: Sequence[SpectralField],
    axis: int,
) -> SpectralOperator:
    """Rec^j(P_n)(f_1..f_{n+1}) = [f_{n+1} D_j, P_n(f_1..f_n)] - sum_k P_n(.., f_{n+1} d_j f_k, ..)."""
    fs = list(fs)
    if not fs:
        raise InvalidParameterError("rec_j needs n + 1 >= 1 fields")
    g, base = fs[-1], fs[:-1]
    inner = Pn(base)
    c = inner.components
    if not 0 <= axis < g.grid.dim:
        raise InvalidParameterError(f"axis {axis} out of range")
    gD = multiplication_operator(g, c) @ derivative_operator(g.grid, axis, c)
    out = gD @ inner - inner @ gD
    for k in range(len(base)):
        mod = list(base)
        mod[k] = pointwise_multiply(g, partial_derivative(base[k], axis))
        out = out - Pn(mod)
    return out


def covariant_derivative(u: SpectralField, w: SpectralField) -> SpectralField:
    """nabla_u w, componentwise sum_j u^j d_j w (dealiased)."""
    out = SpectralField.zeros(w.grid, w.components)
    for j in range(u.grid.dim):
        out = out + pointwise_multiply(u.component(j), partial_derivative(w, j))
    return out


def nabla_operator(u: SpectralField, components: int) -> SpectralOperator:
    """Dense nabla_u = sum_j M_{u^j} D_j acting on fields with ``components`` entries."""
    grid = u.grid
    out = None
    for j in range(grid.dim):
        term = multiplication_operator(u.component(j), components) @ derivative_operator(
            grid, j, components
        )
        out = term if out is None else out + term
    return out


def _check_vectors(us, A):
    for u in us:
        if u.grid != A.grid or u.components != A.grid.dim:
            raise GridMismatchError("A_n arguments must be vector fields on the operator grid")


def a_n(us: Sequence[SpectralField], A: SpectralOperator, max_n: int = MAX_AN_ORDER):
    """A_n(u_1, ..., u_n) by the recurrence

    A_{n+1}(u_1..u_{n+1}) = [nabla_{u_{n+1}}, A_n(u_1..u_n)] - sum_k A_n(.., nabla_{u_{n+1}} u_k, ..).
    """
    us = list(us)
    if len(us) > max_n:
        raise InvalidParameterError(f"n = {len(us)} exceeds bound {max_n}")
    _check_vectors(us, A)
    if not us:
        return A
    prev, u = us[:-1], us[-1]
    base = a_n(prev, A, max_n)
    nab = nabla_operator(u, A.components)
    out = nab @ base - base @ nab
    for k in range(len(prev)):
        mod = list(prev)
        mod[k] = covariant_derivative(u, prev[k])
        out = out - a_n(mod, A, max_n)
    return out.with_order(A.order_tag)


def a_n_apply(us: Sequence[SpectralField], A: SpectralOperator, v: SpectralField) -> SpectralField:
    """A_n(u_1..u_n) v through the same recurrence, acting on vectors only."""
    us = list(us)
    if not us:
        return apply(A, v)
    prev, u = us[:-1], us[-1]
    out = covariant_derivative(u, a_n_apply(prev, A, v)) - a_n_apply(
        prev, A, covariant_derivative(u, v)
    )
    for k in range(len(prev)):
        mod = list(prev)
        mod[k] = covariant_derivative(u, prev[k])
        out = out - a_n_apply(mod, A, v)
    return out


# ---------------------------------------------------------------- Type I / II splitting


@dataclass(frozen=True)
class FieldRef:
    """Scalar argument f = d_{deriv} u_{vec}^{comp} (0-based indices)."""

    vec: int
    comp: int
    deriv: tuple = ()

    def resolve(self, us: Sequence[SpectralField]) -> SpectralField:
        f = us[self.vec].component(self.comp)
        for axis in self.deriv:
            f = partial_derivative(f, axis)
        return f

    def __str__(self):
        d = "".join(f"d{a}" for a in self.deriv)
        return f"{d}u{self.vec + 1}^{self.comp}"


@dataclass(frozen=True)
class TermDescriptor:
    """One term of A_n in Type I or Type II shape.

    Type I:  sign * M(outer) o ad_D^alpha P
    Type II: sign * M(outer) o S_{m2, P'}(nested) o M(inner) o D_axis

    ``base`` lists the operations turning A into P': ``("ad", j)`` maps X to
    [D_j, X] and ``("rmul", j)`` maps X to X o D_j.
    """

    kind: str
    sign: int
    outer: tuple
    base: tuple = ()
    nested: tuple = ()
    inner: tuple = ()
    axis: Optional[int] = None

    @property
    def m1(self) -> int:
        return len(self.outer)

    @property
    def m2(self) -> int:
        return len(self.nested)

    @property
    def m3(self) -> int:
        return len(self.inner)

    def alpha(self, dim: int) -> tuple:
        counts = [0] * dim
        for op, j in self.base:
            if op == "ad":
                counts[j] += 1
        return tuple(counts)

    def base_order(self, r: float) -> float:
        return r + sum(1 for op, _ in self.base if op == "rmul")

    def fields(self) -> list:
        return list(self.outer) + list(self.nested) + list(self.inner)

    def base_operator(self, A: SpectralOperator) -> SpectralOperator:
        out = A
        for op, j in self.base:
            D = derivative_operator(A.grid, j, A.components)
            out = D @ out - out @ D if op == "ad" else out @ D
        return out

    def evaluate(self, us: Sequence[SpectralField], A: SpectralOperator) -> SpectralOperator:
        c = A.components
        grid = A.grid

        def mult(refs):
            if not refs:
                return identity_operator(grid, c)
            return mult_op([ref.resolve(us) for ref in refs], c)

        P = self.base_operator(A)
        if self.kind == "I":
            return (mult(self.outer) @ P) * self.sign
        S = nested_commutator([ref.resolve(us) for ref in self.nested], P)
        tail = mult(self.inner) @ derivative_operator(grid, self.axis, c)
        return (mult(self.outer) @ S @ tail) * self.sign

    def __str__(self):
        fmt = lambda refs: ",".join(str(r) for r in refs)
        base = "".join(f"[D{j}," if op == "ad" else "" for op, j in self.base)
        if self.kind == "I":
            return f"{'+' if self.sign > 0 else '-'} M({fmt(self.outer)}) ad^{self.base} A"
        return (
            f"{'+' if self.sign > 0 else '-'} M({fmt(self.outer)}) S_{self.m2},{self.base}"
            f"({fmt(self.nested)}) M({fmt(self.inner)}) D{self.axis}"
        )


def _rec_term(term: TermDescriptor, g: FieldRef, j: int, literal: bool) -> list:
    """Rec^j of one descriptor with new argument g (undifferentiated)."""
    if term.kind == "I":
        return [
            replace(term, outer=term.outer + (g,), base=term.base + (("ad", j),)),
            TermDescriptor("II", term.sign, term.outer, term.base, (g,), (), j),
        ]
    dg = lambda axis: replace(g, deriv=(axis,))
    out = [
        # Rec^j of the nested commutator, expanded by the Rec^j(S_{n,P}) identity
        replace(term, outer=term.outer + (g,), base=term.base + (("ad", j),)),
        replace(term, base=term.base + (("rmul", j),), nested=term.nested + (g,)),
        replace(term, inner=term.inner + (dg(j),)),
        # Rec^j(D_i)(g) = -M(d_i g) D_j
        replace(term, sign=-term.sign, inner=term.inner + (dg(term.axis),), axis=j),
    ]
    if not literal:
        # Rec^j(M(d_p f_1, ..)) = -sum_k M(.., d_j f_k, .., d_p g): the derivative
        # factors are not annihilated by Rec^j.
        for k, ref in enumerate(term.inner):
            if len(ref.deriv) != 1:
                raise NotImplementedError("only first derivatives occur in the splitting")
            (p,) = ref.deriv
            inner = term.inner[:k] + (replace(ref, deriv=(j,)),) + term.inner[k + 1 :]
            out.append(replace(term, sign=-term.sign, inner=inner + (dg(p),)))
    return out


def split_terms(n: int, dim: int, literal: bool = False) -> list:
    """Type I / Type II descriptors whose sum is A_n(u_1, ..., u_n).

    Built by replaying the induction: the base case
    A_1(u) = sum_j M(u^j) [D_j, A] + [u^j, A] D_j, then Rec applied term by
    term with the product rule. ``literal=True`` drops the Rec^j contribution
    of the derivative factors M(d_p f ...), reproducing the term list exactly
    as written in the published induction step; that list is incomplete from
    n = 3 on.
    """
    if n not in (1, 2, 3):
        raise InvalidParameterError(f"split_terms supports n in 1..3, got {n}")
    terms = []
    for j in range(dim):
        g = FieldRef(0, j)
        terms.append(TermDescriptor("I", 1, (g,), (("ad", j),)))
        terms.append(TermDescriptor("II", 1, (), (), (g,), (), j))
    for step in range(1, n):
        new = []
        for j in range(dim):
            g = FieldRef(step, j)
            for term in terms:
                new.extend(_rec_term(term, g, j, literal))
        terms = new
    return terms


def evaluate_split(terms, us: Sequence[SpectralField], A: SpectralOperator) -> SpectralOperator:
    _check_vectors(us, A)
    total = None
    for term in terms:
        val = term.evaluate(us, A)
        total = val if total is None else total + val
    return total


# ---------------------------------------------------------------- interior comparisons


def interior_indices(grid: TorusGrid, margin: int, components: int = 1) -> np.ndarray:
    keep = np.max(np.abs(grid.band_freqs), axis=1) <= grid.cutoff - 1 - margin
    if not keep.any():
        raise InvalidParameterError(f"margin {margin} leaves no interior on n={grid.n}")
    idx = np.flatnonzero(keep)
    return (np.arange(components)[:, None] * grid.band_size + idx[None, :]).ravel()


def interior_residual(
    X: SpectralOperator,
    Y: SpectralOperator,
    margin: int,
    scale: Optional[float] = None,
    ord="fro",
) -> float:
    """Relative gap ||X - Y|| / scale on the interior block.

    ``ord`` is passed to :func:`numpy.linalg.norm` (``"fro"`` or ``2`` for the
    spectral norm); ``scale`` defaults to the larger of the two interior norms.
    """
    idx = interior_indices(X.grid, margin, X.components)
    xs = X.to_dense()[np.ix_(idx, idx)]
    ys = Y.to_dense()[np.ix_(idx, idx)]
    if scale is None:
        scale = max(np.linalg.norm(xs, ord), np.linalg.norm(ys, ord))
    gap = float(np.linalg.norm(xs - ys, ord))
    return gap if scale == 0 else gap / float(scale)


def interior_norm(X: SpectralOperator, margin: int) -> float:
    idx = interior_indices(X.grid, margin, X.components)
    return float(np.linalg.norm(X.to_dense()[np.ix_(idx, idx)]))


def random_trig_field(
    grid: TorusGrid, degree: int, rng: np.random.Generator, components: int = 1
) -> SpectralField:
    """Real trigonometric polynomial with max-norm frequency <= ``degree``."""
    if degree >= grid.cutoff:
        raise InvalidParameterError("degree must stay inside the band")
    coeffs = rng.normal(size=(components,) + grid.shape) + 1j * rng.normal(
        size=(components,) + grid.shape
    )
    coeffs[:, np.max(np.abs(grid.freqs), axis=0) > degree] = 0.0
    axes = tuple(range(1, grid.dim + 1))
    flipped = np.roll(np.flip(coeffs, axis=axes), 1, axis=axes)
    return SpectralField(grid, 0.5 * (coeffs + np.conj(flipped)))


def random_band_limited_operator(
    grid: TorusGrid, support: int, rng: np.random.Generator, components: int = 1
) -> SpectralOperator:
    """Random dense operator coupling only frequencies with max-norm <= ``support``.

    Satisfies the reality condition M(-xi, -k) = conj M(xi, k).
    """
    size = components * grid.band_size
    mat = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
    low = np.max(np.abs(grid.band_freqs), axis=1) <= support
    keep = np.tile(low, components)
    mat[~keep, :] = 0.0
    mat[:, ~keep] = 0.0
    neg = grid.neg_band_index
    perm = (np.arange(components)[:, None] * grid.band_size + neg[None, :]).ravel()
    mat = 0.5 * (mat + np.conj(mat[np.ix_(perm, perm)]))
    return SpectralOperator(grid, components, matrix=mat)


# ---------------------------------------------------------------- symbol formulas


def p_hat_n(phat: Callable, n: int, lam, xis: Sequence) -> np.ndarray:
    """Alternating subset sum  sum_J (-1)^|J| phat(lam, xi_0 + sum_{j in J} xi_j)."""
    if n > 4:
        raise InvalidParameterError("p_hat_n is limited to n <= 4")
    xis = [np.atleast_1d(np.asarray(x, dtype=int)) for x in xis]
    if len(xis) != n + 1:
        raise InvalidParameterError(f"need n + 1 = {n + 1} frequencies, got {len(xis)}")
    total = 0.0
    for size in range(n + 1):
        for J in itertools.combinations(range(1, n + 1), size):
            xi = xis[0] + sum((xis[j] for j in J), np.zeros_like(xis[0]))
            total = total + (-1) ** size * np.asarray(phat(lam, xi))
    return total


def _single_mode_field(grid: TorusGrid, k, amplitude: complex) -> SpectralField:
    coeffs = np.zeros(grid.shape, dtype=complex)
    k = np.atleast_1d(k)
    coeffs[grid.index_of(k)] += amplitude
    coeffs[grid.index_of(-k)] += np.conj(amplitude)
    return SpectralField(grid, coeffs)


def symbol_formula_check(
    spec,
    grid: TorusGrid,
    modes: Sequence,
    amplitudes: Sequence[complex],
    w_mode,
) -> float:
    """Compare a column of S_{n,P} with the multilinear phat_n representation.

    Each f_i = a_i e_{k_i} + conj(a_i) e_{-k_i}; the operator column for input
    mode ``w_mode`` must equal, at every output frequency xi,

        sum over sign choices and lam  prod_i fhat_i(xi_i) * phat_n(lam, w_mode, xi_1..xi_n),

    with lam = xi - w_mode - sum xi_i. Returns the max absolute discrepancy.
    Frequencies must stay clear of the band edge for the truncated operator
    to be exact.
    """
    from .operators import realize

    n = len(modes)
    if n > 3:
        raise InvalidParameterError("symbol_formula_check supports n <= 3")
    P = realize(spec, grid)
    fs = [_single_mode_field(grid, k, a) for k, a in zip(modes, amplitudes)]
    S = nested_commutator(fs, P)
    w_mode = np.atleast_1d(np.asarray(w_mode, dtype=int))
    col = S.to_dense()[:, grid.band_lookup[tuple(w_mode)]]

    phat = spec.x_fourier(grid)
    predicted = np.zeros(grid.band_size, dtype=complex)
    choices = [
        [(np.atleast_1d(k), a), (-np.atleast_1d(k), np.conj(a))]
        for k, a in zip(modes, amplitudes)
    ]
    for combo in itertools.product(*choices):
        xis = [w_mode] + [k for k, _ in combo]
        weight = np.prod([a for _, a in combo]) if combo else 1.0
        shift = w_mode + sum((k for k, _ in combo), np.zeros_like(w_mode))
        for b, xi in enumerate(grid.band_freqs):
            lam = xi - shift
            val = p_hat_n(phat, n, lam, xis)
            predicted[b] += weight * complex(np.asarray(val).ravel()[0])
    return float(np.max(np.abs(col - predicted)))


def pn_estimate_constant(
    phat: Callable,
    n: int,
    r: float,
    grid: TorusGrid,
    samples: int,
    rng: np.random.Generator,
    lams: Sequence = (0,),
) -> float:
    """Largest observed |phat_n| / (prod <xi_j> * sum_J <xi_0 + xi_J>^(r-1)) over random tuples."""
    bf = grid.band_freqs
    br = lambda k: float(np.sqrt(1.0 + np.sum(np.asarray(k, dtype=float) ** 2)))
    best = 0.0
    for _ in range(samples):
        xis = [bf[rng.integers(len(bf))] for _ in range(n + 1)]
        lam = np.atleast_1d(lams[rng.integers(len(lams))])
        num = float(np.max(np.abs(p_hat_n(phat, n, lam, xis))))
        bound = np.prod([br(x) for x in xis[1:]]) * sum(
            br(xis[0] + sum((xis[j] for j in J), np.zeros_like(xis[0]))) ** (r - 1)
            for size in range(n + 1)
            for J in itertools.combinations(range(1, n + 1), size)
        )
        best = max(best, num / bound)
    return best


# ---------------------------------------------------------------- boundedness probe


@dataclass
class ProbeReport:
    n: int
    q: float
    r: float
    N: int
    samples: int
    skips: int
    max_ratio: float
    median_ratio: float
    seed: int
    input_limit: Optional[int] = None
    ratios: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        out = asdict(self)
        out.pop("ratios")
        out.pop("input_limit")
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


REFERENCE_CUTOFF = 128


def probe_field(
    grid: TorusGrid,
    q: float,
    seed: int,
    sample: int,
    slot: int,
    components: int = 1,
    limit: Optional[int] = None,
) -> SpectralField:
    """Random real field with |fhat(k)| = <k>^-(q + d/2 + 0.51) and uniformly random phases.

    Coefficients are drawn on a fixed reference lattice and truncated to
    max-norm frequency ``limit`` (default: the whole band), so the same
    (seed, sample, slot) gives nested fields across resolutions.
    """
    if grid.cutoff > REFERENCE_CUTOFF:
        raise InvalidParameterError(f"probe fields support n <= {2 * REFERENCE_CUTOFF}")
    rng = np.random.default_rng([seed, sample, slot])
    size = 2 * REFERENCE_CUTOFF - 1
    shape = (components,) + (size,) * grid.dim
    theta = rng.uniform(size=shape)
    # odd phase theta(k) - theta(-k) gives fhat(-k) = conj fhat(k) at full amplitude
    theta = theta - np.flip(theta, axis=tuple(range(1, grid.dim + 1)))
    kc = np.arange(-REFERENCE_CUTOFF + 1, REFERENCE_CUTOFF)
    k = np.array(np.meshgrid(*([kc] * grid.dim), indexing="ij"))
    decay = (1.0 + np.sum(k.astype(float) ** 2, axis=0)) ** (-(q + grid.dim / 2 + 0.51) / 2)
    ref = np.exp(2j * np.pi * theta) * decay
    lo = REFERENCE_CUTOFF - grid.cutoff
    sel = slice(lo, lo + grid.n - 1)
    centered = ref[(slice(None),) + (sel,) * grid.dim]
    coeffs = np.zeros(shape[:1] + grid.shape, dtype=complex)
    idx = np.arange(-grid.cutoff + 1, grid.cutoff) % grid.n
    coeffs[(slice(None),) + np.ix_(*([idx] * grid.dim))] = centered
    if limit is not None:
        coeffs[:, np.max(np.abs(grid.freqs), axis=0) > limit] = 0.0
    return SpectralField(grid, coeffs)


def x_bandwidth(P: SpectralOperator, rtol: float = 1e-13) -> int:
    """Largest max-norm frequency shift |xi - k| coupled by P (0 for multipliers)."""
    if P.is_multiplier:
        return 0
    grid = P.grid
    mat = np.abs(P.to_dense())
    B = grid.band_size
    blocks = mat.reshape(P.components, B, P.components, B).max(axis=(0, 2))
    rows, cols = np.nonzero(blocks > rtol * blocks.max())
    if rows.size == 0:
        return 0
    shift = np.abs(grid.band_freqs[rows] - grid.band_freqs[cols]).max()
    return int(shift)


def probe_input_limit(P: SpectralOperator, n: int) -> int:
    """Input cutoff keeping every intermediate product of S_{n,P} w inside the band."""
    limit = (P.grid.cutoff - 1 - x_bandwidth(P)) // (n + 1)
    if limit < 1:
        raise InvalidParameterError(f"grid n={P.grid.n} too small to probe n={n}")
    return limit


def commutator_ratio(
    P: SpectralOperator, fs: Sequence[SpectralField], w: SpectralField, q: float, r: float
) -> Optional[float]:
    """||S_{n,P}(f) w||_{H^{q-r}} / (prod ||f_i||_{H^q} ||w||_{H^{q-1}}), or None if undefined."""
    denom = np.prod([sobolev_norm(f, q) for f in fs]) * sobolev_norm(w, max(q - 1, 0.0))
    if denom == 0:
        return None
    num = sobolev_norm(nested_commutator_apply(fs, P, w), max(q - r, 0.0))
    return float(num / denom)


def boundedness_probe(
    P: SpectralOperator,
    n: int,
    q: float,
    r: float,
    samples: int,
    seed: int,
    sampler: Optional[Callable] = None,
    workers: int = 1,
) -> ProbeReport:
    """Empirical commutator ratios for random band-limited inputs at one resolution.

    Inputs are band-limited by :func:`probe_input_limit`, so S_{n,P} w is
    computed without truncation: the ratio measures the operator itself rather
    than band-edge artifacts of the truncated products. ``sampler(i)`` may
    override the random inputs and must return ``(fs, w)``.
    """
    d = P.grid.dim
    if not q > 1 + d / 2:
        raise InvalidParameterError(f"need q > 1 + d/2, got q={q}")
    if not 1 <= r <= q:
        raise InvalidParameterError(f"need 1 <= r <= q, got r={r}")
    if n < 1:
        raise InvalidParameterError("n must be >= 1")

    limit = None if sampler is not None else probe_input_limit(P, n)

    def draw(i):
        if sampler is not None:
            return sampler(i)
        fs = [probe_field(P.grid, q, seed, i, slot, limit=limit) for slot in range(n)]
        w = probe_field(P.grid, q - 1, seed, i, n, P.components, limit=limit)
        return fs, w

    def one(i):
        fs, w = draw(i)
        return commutator_ratio(P, fs, w, q, r)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            ratios = list(pool.map(one, range(samples)))
    else:
        ratios = [one(i) for i in range(samples)]
    kept = [x for x in ratios if x is not None]
    return ProbeReport(
        n=n,
        q=q,
        r=r,
        N=P.grid.n,
        samples=samples,
        skips=len(ratios) - len(kept),
        max_ratio=float(max(kept)) if kept else float("nan"),
        median_ratio=float(np.median(kept)) if kept else float("nan"),
        seed=seed,
        input_limit=limit,
        ratios=kept,
    )


def probe_ladder(
    build: Callable[[TorusGrid], SpectralOperator],
    ns: Sequence[int],
    n: int,
    q: float,
    r: float,
    samples: int,
    seed: int,
    dim: int = 1,
) -> dict:
    """Run :func:`boundedness_probe` across resolutions and summarize the trend.

    Returns the reports, the relative spread (max - min) / min of the max
    ratios and the least-squares slope of log(max ratio) against log N.
    """
    reports = [
        boundedness_probe(build(TorusGrid(dim, N)), n, q, r, samples, seed) for N in ns
    ]
    maxes = np.array([rep.max_ratio for rep in reports])
    spread = float((maxes.max() - maxes.min()) / maxes.min()) if maxes.min() > 0 else 0.0
    slope = float(np.polyfit(np.log(ns), np.log(maxes), 1)[0]) if maxes.min() > 0 else 0.0
    return {"reports": reports, "spread": spread, "slope": slope}


# ---------------------------------------------------------------- identity suite


def identity_residuals(
    grid: TorusGrid,
    rng: np.random.Generator,
    n: int = 2,
    degree: int = 2,
    support: int = 3,
) -> dict:
    """Residuals of the commutator identities for one random instance.

    Uses a random band-limited dense P, random trig polynomials of the given
    degree and axis 0 (plus axis 1 in 2-D for the mixed checks). Each entry is
    a relative interior-block residual.
    """
    if n < 1 or n > 2:
        raise InvalidParameterError("identity suite covers n in {1, 2}")
    margin = degree * (n + 2)
    if support + margin > grid.cutoff - 1:
        raise InvalidParameterError("grid too small for the requested degree and support")
    P = random_band_limited_operator(grid, support, rng)
    Q = random_band_limited_operator(grid, support, rng)
    R = random_band_limited_operator(grid, support, rng)
    fs = [random_trig_field(grid, degree, rng) for _ in range(n + 1)]
    res = {}

    full = lambda X, Y: float(np.linalg.norm(X.to_dense() - Y.to_dense()) / max(X.norm(), Y.norm(), 1e-300))
    res["leibniz"] = full(commutator(P @ Q, R), P @ commutator(Q, R) + commutator(P, R) @ Q)
    jac = (
        commutator(P, commutator(Q, R))
        + commutator(Q, commutator(R, P))
        + commutator(R, commutator(P, Q))
    )
    res["jacobi"] = float(jac.norm() / (commutator(P, commutator(Q, R)).norm()))

    worst_lemma = worst_gl = worst_gj = worst_sym_s = worst_sym_m = worst_recm = 0.0
    for axis in range(grid.dim):
        D = derivative_operator(grid, axis)
        S = lambda args, base=P: nested_commutator(args, base)
        lhs = rec_j(S, fs, axis)
        f_new = fs[-1]
        rhs = (
            mult_op([f_new]) @ S(fs[:-1], commutator(D, P))
            + S(fs, P @ D)
            + S(fs[:-1]) @ mult_op([partial_derivative(f_new, axis)])
        )
        worst_lemma = max(worst_lemma, interior_residual(lhs, rhs, margin))

        # generalized Leibniz with n + 1 = len(fs) arguments
        lhs = S(fs, P @ D)
        rhs = S(fs) @ D
        for k in range(len(fs)):
            rest = fs[:k] + fs[k + 1 :]
            rhs = rhs - S(rest) @ mult_op([partial_derivative(fs[k], axis)])
        worst_gl = max(worst_gl, interior_residual(lhs, rhs, margin))

        # generalized Jacobi with n arguments
        args = fs[:-1]
        lhs = commutator(D, S(args))
        rhs = S(args, commutator(D, P))
        for k in range(len(args)):
            mod = list(args)
            mod[k] = partial_derivative(args[k], axis)
            rhs = rhs + S(mod)
        worst_gj = max(worst_gj, interior_residual(lhs, rhs, margin))

        # Rec^j(M_n) = 0, relative to the size of [g D_j, M_n]
        Mn = lambda args: mult_op(args)
        recm = rec_j(Mn, fs, axis)
        gD = mult_op([fs[-1]]) @ D
        scale = interior_norm(commutator(gD, Mn(fs[:-1])), margin)
        worst_recm = max(worst_recm, interior_norm(recm, margin) / scale)

    for perm in itertools.permutations(range(n)):
        permuted = [fs[i] for i in perm]
        worst_sym_s = max(
            worst_sym_s,
            interior_residual(nested_commutator(permuted, P), nested_commutator(fs[:n], P), margin),
        )
        worst_sym_m = max(
            worst_sym_m, full(mult_op(permuted), mult_op(fs[:n]))
        )
    res["lemma_rec_s"] = worst_lemma
    res["generalized_leibniz"] = worst_gl
    res["generalized_jacobi"] = worst_gj
    res["rec_m_vanishes"] = worst_recm
    res["symmetry_s"] = worst_sym_s
    res["symmetry_m"] = worst_sym_m
    return res
