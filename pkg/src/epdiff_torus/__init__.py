"""Spectral lab for the EPDiff / Euler-Arnold equation on the flat torus.

Submodules
----------
spectral_core   grids, band-limited fields, Sobolev norms, diffeomorphisms
operators       Fourier multipliers and symbol classes as dense matrices
commutator_lab  nested commutators, splitting replay, boundedness probes
conjugation     right-translated operators and their derivatives at the identity
epdiff          momentum, sprays, geodesic integrators and shooting
cli             command-line runner
"""

from .errors import (
    BlowUpSuspected,
    DiffeoInvariantError,
    EpdiffError,
    GridMismatchError,
    InvalidParameterError,
    InversionError,
    RealityError,
    SingularOperatorError,
)
from .spectral_core import Diffeo, SpectralField, TorusGrid, sobolev_norm
from .operators import SpectralOperator, SymbolSpec, bessel_power, realize

__version__ = "0.1.0"

__all__ = [
    "BlowUpSuspected",
    "DiffeoInvariantError",
    "EpdiffError",
    "GridMismatchError",
    "InvalidParameterError",
    "InversionError",
    "RealityError",
    "SingularOperatorError",
    "Diffeo",
    "SpectralField",
    "TorusGrid",
    "sobolev_norm",
    "SpectralOperator",
    "SymbolSpec",
    "bessel_power",
    "realize",
]
