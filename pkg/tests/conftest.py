import numpy as np
import pytest

from epdiff_torus.operators import SymbolSpec, bessel_power
from epdiff_torus.spectral_core import SpectralField, TorusGrid


def l2(f: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))


def inertia(s: float) -> SymbolSpec:
    """<k>^{2s} multiplier."""
    return SymbolSpec("multiplier", 2 * s, bessel_power(s))


def sine(grid: TorusGrid, amp: float = 1.0, k: int = 1) -> SpectralField:
    return SpectralField.from_function(grid, lambda x: amp * np.sin(2 * np.pi * k * x))


@pytest.fixture
def grid32():
    return TorusGrid(1, 32)


@pytest.fixture
def grid128():
    return TorusGrid(1, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
