import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import l2, sine
from epdiff_torus.commutator_lab import random_trig_field
from epdiff_torus.errors import (
    DiffeoInvariantError,
    GridMismatchError,
    InvalidParameterError,
)
from epdiff_torus.spectral_core import (
    Diffeo,
    SpectralField,
    TorusGrid,
    compose,
    compose_diffeos,
    evaluate,
    inverse_residual,
    invert_diffeo,
    jacobian_det,
    partial_derivative,
    pointwise_multiply,
    sobolev_norm,
)


class TestTorusGrid:
    def test_band_size(self):
        assert TorusGrid(1, 32).band_size == 31
        assert TorusGrid(2, 16).band_size == 15 * 15

    @pytest.mark.parametrize("dim,n", [(0, 16), (3, 16), (1, 7), (1, 2)])
    def test_rejects_bad_shapes(self, dim, n):
        with pytest.raises(InvalidParameterError):
            TorusGrid(dim, n)


class TestSpectralField:
    def test_nyquist_zeroed(self, grid32):
        f = SpectralField.from_values(grid32, np.cos(np.pi * 32 * grid32.points[0]))
        assert np.max(np.abs(f.coeffs)) < 1e-14

    def test_reality_defect(self, grid32, rng):
        assert random_trig_field(grid32, 8, rng).reality_defect() < 1e-15
        coeffs = np.zeros((1, 32), dtype=complex)
        coeffs[0, 1] = 1.0
        assert SpectralField(grid32, coeffs).reality_defect() == pytest.approx(1.0)

    def test_arithmetic_rejects_grid_mismatch(self, grid32):
        with pytest.raises(GridMismatchError):
            SpectralField.zeros(grid32) + SpectralField.zeros(TorusGrid(1, 64))


class TestSobolevNorm:
    def test_zero(self, grid32):
        assert sobolev_norm(SpectralField.zeros(grid32), 3.0) == 0.0

    def test_sine_l2(self, grid32):
        assert sobolev_norm(sine(grid32), 0) == pytest.approx(1 / np.sqrt(2), rel=1e-14)

    def test_sine_h1(self, grid32):
        assert sobolev_norm(sine(grid32), 1) == pytest.approx(1.0, rel=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(q1=st.floats(0, 3), dq=st.floats(0, 2), seed=st.integers(0, 2**16))
    def test_monotone_in_q(self, q1, dq, seed):
        grid = TorusGrid(1, 32)
        f = random_trig_field(grid, 6, np.random.default_rng(seed))
        assert sobolev_norm(f, q1) <= sobolev_norm(f, q1 + dq) * (1 + 1e-12)


class TestPointwiseMultiply:
    def test_constant_one_is_identity(self, grid32, rng):
        g = random_trig_field(grid32, 10, rng)
        one = SpectralField.constant(grid32, 1.0)
        assert l2(pointwise_multiply(one, g) - g) < 1e-14

    def test_product_to_sum(self, grid32):
        s = sine(grid32)
        expected = SpectralField.from_function(grid32, lambda x: 0.5 - 0.5 * np.cos(4 * np.pi * x))
        assert l2(pointwise_multiply(s, s) - expected) < 1e-14

    def test_truncates_instead_of_aliasing(self, grid32):
        # cos(2 pi x) cos(2 pi 15 x): modes 14 and 16; 16 lies outside the band
        n = grid32.n
        f = SpectralField.from_function(grid32, lambda x: np.cos(2 * np.pi * x))
        g = SpectralField.from_function(grid32, lambda x: np.cos(2 * np.pi * (n // 2 - 1) * x))
        prod = pointwise_multiply(f, g)
        expected = np.zeros(n, dtype=complex)
        # exact convolution of {+-1: 1/2} with {+-15: 1/2}, restricted to the band
        for a in (1, -1):
            for b in (n // 2 - 1, -(n // 2 - 1)):
                k = a + b
                if abs(k) <= n // 2 - 1:
                    expected[k % n] += 0.25
        assert np.max(np.abs(prod.coeffs[0] - expected)) < 1e-14
        assert expected[n // 2 - 2] == pytest.approx(0.25)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**16))
    def test_commutative(self, seed):
        grid = TorusGrid(1, 32)
        rng = np.random.default_rng(seed)
        f, g = random_trig_field(grid, 12, rng), random_trig_field(grid, 12, rng)
        assert l2(pointwise_multiply(f, g) - pointwise_multiply(g, f)) < 1e-14


class TestPartialDerivative:
    def test_constant(self, grid32):
        assert l2(partial_derivative(SpectralField.constant(grid32, 3.0), 0)) == 0.0

    def test_sine(self, grid32):
        expected = SpectralField.from_function(grid32, lambda x: 2 * np.pi * np.cos(2 * np.pi * x))
        assert l2(partial_derivative(sine(grid32), 0) - expected) < 1e-13

    def test_mixed_partials_commute(self, rng):
        grid = TorusGrid(2, 16)
        f = random_trig_field(grid, 5, rng)
        a = partial_derivative(partial_derivative(f, 0), 1)
        b = partial_derivative(partial_derivative(f, 1), 0)
        assert l2(a - b) <= 1e-14 * l2(a)

    def test_bad_axis(self, grid32):
        with pytest.raises(InvalidParameterError):
            partial_derivative(sine(grid32), 1)


class TestEvaluate:
    def test_collocation_points(self, grid32, rng):
        f = random_trig_field(grid32, 15, rng)
        vals = evaluate(f, grid32.point_list)[0]
        assert np.max(np.abs(vals - f.values()[0])) <= 1e-12 * np.max(np.abs(vals))

    def test_sine_quarter(self, grid32):
        assert evaluate(sine(grid32), [[0.25]])[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_off_grid_against_oversampled_fft(self, grid32, rng):
        # on the 4N grid the band-limited series is sampled exactly; pick off-grid
        # points that are nodes of that finer grid
        f = random_trig_field(grid32, 15, rng)
        fine = TorusGrid(1, 4 * grid32.n)
        padded = np.zeros(fine.n, dtype=complex)
        k = grid32.band_freqs[:, 0]
        padded[k % fine.n] = f.coeffs[0][k % grid32.n]
        samples = np.real(np.fft.ifft(padded) * fine.n)
        idx = rng.integers(0, fine.n, size=20)
        idx = idx[idx % 4 != 0]
        vals = evaluate(f, fine.point_list[idx])[0]
        assert np.max(np.abs(vals - samples[idx])) <= 1e-10


class TestDiffeo:
    def test_rejects_fold(self, grid32):
        disp = sine(grid32, 0.5 / np.pi)
        with pytest.raises(DiffeoInvariantError) as exc:
            Diffeo(disp * 1.5)
        assert exc.value.min_jacobian <= 0

    def test_jacobian_identity(self, grid32):
        J = jacobian_det(Diffeo.identity(grid32))
        assert l2(J - SpectralField.constant(grid32, 1.0)) == 0.0

    def test_jacobian_sine(self, grid32):
        J = jacobian_det(Diffeo(sine(grid32, 0.1)))
        expected = SpectralField.from_function(grid32, lambda x: 1 + 0.2 * np.pi * np.cos(2 * np.pi * x))
        assert l2(J - expected) < 1e-14

    @pytest.mark.parametrize("dim", [1, 2])
    def test_jacobian_integrates_to_one(self, dim, rng):
        grid = TorusGrid(dim, 16 if dim == 2 else 32)
        disp = random_trig_field(grid, 3, rng, dim)
        phi = Diffeo(disp * (0.05 / np.max(np.abs(disp.values()))))
        assert jacobian_det(phi).mean()[0] == pytest.approx(1.0, abs=1e-10)


class TestCompose:
    def test_identity(self, grid32, rng):
        v = random_trig_field(grid32, 10, rng)
        assert l2(compose(v, Diffeo.identity(grid32)) - v) <= 1e-12

    def test_translation_phase_shift(self, grid32):
        c = 0.123
        out = compose(sine(grid32), Diffeo.translation(grid32, c))
        expected = SpectralField.from_function(grid32, lambda x: np.sin(2 * np.pi * (x + c)))
        assert l2(out - expected) < 1e-13

    def test_round_trip(self, grid128, rng):
        disp = random_trig_field(grid128, 3, rng)
        phi = Diffeo(disp * (0.02 / np.max(np.abs(disp.values()))))
        v = random_trig_field(grid128, 4, rng)
        back = compose(compose(v, phi), invert_diffeo(phi))
        assert l2(back - v) <= 1e-6

    def test_compose_diffeos_matches_sequential(self, grid128, rng):
        a = random_trig_field(grid128, 2, rng)
        b = random_trig_field(grid128, 2, rng)
        phi = Diffeo(a * (0.02 / np.max(np.abs(a.values()))))
        psi = Diffeo(b * (0.02 / np.max(np.abs(b.values()))))
        v = random_trig_field(grid128, 3, rng)
        # v o (phi o psi) = (v o phi) o psi
        lhs = compose(v, compose_diffeos(phi, psi))
        rhs = compose(compose(v, phi), psi)
        assert l2(lhs - rhs) <= 1e-6


class TestInvertDiffeo:
    def test_identity(self, grid32):
        psi = invert_diffeo(Diffeo.identity(grid32))
        assert l2(psi.displacement) == 0.0

    def test_translation(self, grid32):
        psi = invert_diffeo(Diffeo.translation(grid32, 0.2))
        assert np.allclose(psi.displacement.values(), -0.2, atol=1e-14)

    def test_sine_residual(self, grid128):
        phi = Diffeo(sine(grid128, 0.1))
        assert inverse_residual(phi, invert_diffeo(phi, tol=1e-12)) <= 1e-10

    def test_two_dimensional(self, rng):
        # the stored inverse is band-limited, so the grid must resolve it
        grid = TorusGrid(2, 64)
        disp = random_trig_field(grid, 2, rng, 2)
        phi = Diffeo(disp * (0.01 / np.max(np.abs(disp.values()))))
        assert inverse_residual(phi, invert_diffeo(phi)) <= 1e-12

    def test_rejects_nonpositive_tol(self, grid32):
        with pytest.raises(InvalidParameterError):
            invert_diffeo(Diffeo.identity(grid32), tol=0.0)
