"""Text formats for field snapshots and symbol definitions, plus atomic writes.

Field snapshot::

    EPDIFF-FIELD v1 d=1 N=32 c=1
    0 -15 1.2345678901234567e-03 -2.0000000000000000e-01
    ...

one line per (component, k) over the band, k as d integers, then the real
and imaginary parts with 17 significant digits.

Symbol file (TOML)::

    kind = "multiplier"
    s = 1.0                       # shorthand for a = bessel_power(s), order 2s

    kind = "separable"
    order = 2.0
    [[terms]]
    g = "g1.field"                # snapshot path, or a number for a constant
    a = { tag = "bessel_power", s = 1.0 }
    [[terms]]
    g = 0.5
    a = { tag = "poly", coeffs = [1.0, 0.0, 1.0] }

Frequency factors come from a fixed catalogue: ``bessel_power`` (s),
``poly`` (coeffs) and ``grid`` (file: a snapshot whose real coefficient
at k is the value a(k)). ``kind = "gridded"`` reads ``values`` from a
``.npy`` table of shape (*x_shape, *k_shape) in FFT layout.
"""

from __future__ import annotations

import json
import os
import re
import sys
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InvalidParameterError, RealityError
from .operators import SymbolSpec, bessel_power, poly
from .spectral_core import SpectralField, TorusGrid

__all__ = [
    "atomic_write",
    "format_float",
    "dump_json",
    "format_field",
    "parse_field",
    "write_field",
    "read_field",
    "load_toml",
    "symbol_from_dict",
    "read_symbol",
    "frequency_factor",
]

PathLike = Union[str, os.PathLike]
HEADER = re.compile(r"^EPDIFF-FIELD v1 d=(\d+) N=(\d+) c=(\d+)$")
REALITY_TOL = 1e-12


def atomic_write(path: PathLike, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file in the same directory and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def format_float(x: float) -> str:
    """17 significant digits."""
    return f"{float(x):.16e}"


def _encode(obj, level: int) -> str:
    pad, inner = "  " * level, "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_encode(obj[k], level + 1)}"
            for k in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{inner}{_encode(v, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if np.isfinite(x) else json.dumps(str(x))
    return json.dumps(str(obj))


def dump_json(obj) -> str:
    """Deterministic JSON: sorted keys, finite floats with 17 significant digits,
    non-finite floats as the strings "nan" / "inf"."""
    return _encode(obj, 0) + "\n"


def format_field(f: SpectralField) -> str:
    grid = f.grid
    lines = [f"EPDIFF-FIELD v1 d={grid.dim} N={grid.n} c={f.components}"]
    band = grid.band_freqs
    for c in range(f.components):
        flat = f.coeffs[c].reshape(-1)[grid.band_flat]
        for k, z in zip(band, flat):
            ks = " ".join(str(int(x)) for x in k)
            lines.append(f"{c} {ks} {format_float(z.real)} {format_float(z.imag)}")
    return "\n".join(lines) + "\n"


def parse_field(text: str) -> SpectralField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise InvalidParameterError("empty field snapshot")
    m = HEADER.match(lines[0].strip())
    if not m:
        raise InvalidParameterError(f"bad field snapshot header: {lines[0]!r}")
    d, n, c = (int(x) for x in m.groups())
    grid = TorusGrid(d, n)
    coeffs = np.zeros((c,) + grid.shape, dtype=complex)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != d + 3:
            raise InvalidParameterError(f"bad field snapshot line: {ln!r}")
        comp = int(parts[0])
        k = np.array([int(x) for x in parts[1 : 1 + d]])
        if not 0 <= comp < c or not grid.in_band(k):
            raise InvalidParameterError(f"field snapshot entry out of range: {ln!r}")
        coeffs[(comp,) + grid.index_of(k)] = float(parts[-2]) + 1j * float(parts[-1])
    axes = tuple(range(1, d + 1))
    mirrored = np.conj(np.roll(np.flip(coeffs, axis=axes), 1, axis=axes))
    scale = max(float(np.max(np.abs(coeffs))), 1.0)
    defect = float(np.max(np.abs(coeffs - mirrored))) if coeffs.size else 0.0
    if defect > REALITY_TOL * scale:
        raise RealityError(f"snapshot violates the reality condition (defect {defect:.3e})")
    return SpectralField(grid, 0.5 * (coeffs + mirrored))


def write_field(path: PathLike, f: SpectralField) -> Path:
    return atomic_write(path, format_field(f))


def read_field(path: PathLike) -> SpectralField:
    return parse_field(Path(path).read_text(encoding="utf-8"))


def load_toml(path: PathLike) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise InvalidParameterError(f"{path}: {exc}") from exc


def frequency_factor(desc: dict, base: Path):
    """Catalogue lookup for a frequency factor a(k)."""
    if not isinstance(desc, dict) or "tag" not in desc:
        raise InvalidParameterError("frequency factor needs a 'tag'")
    tag = desc["tag"]
    if tag == "bessel_power":
        return bessel_power(float(desc["s"]))
    if tag == "poly":
        return poly(desc["coeffs"])
    if tag == "grid":
        table = read_field(base / desc["file"])
        grid = table.grid
        values = table.coeffs[0].real

        def symbol(k):
            k = np.asarray(k, dtype=int)
            idx = tuple(np.mod(k[i], grid.n) for i in range(grid.dim))
            inside = np.all(np.abs(k) <= grid.cutoff - 1, axis=0)
            return np.where(inside, values[idx], 0.0)

        symbol.tag = f"grid({desc['file']!r})"
        return symbol
    raise InvalidParameterError(f"unknown frequency factor tag {tag!r}")


def symbol_from_dict(desc: dict, grid: TorusGrid, base: PathLike = ".") -> SymbolSpec:
    base = Path(base)
    kind = desc.get("kind")
    flags = {k: bool(desc[k]) for k in ("hermitian", "positive", "elliptic") if k in desc}
    if kind == "multiplier":
        if "s" in desc:
            s = float(desc["s"])
            return SymbolSpec("multiplier", float(desc.get("order", 2 * s)), bessel_power(s), **flags)
        if "a" not in desc or "order" not in desc:
            raise InvalidParameterError("multiplier symbol needs 's' or both 'a' and 'order'")
        return SymbolSpec("multiplier", float(desc["order"]), frequency_factor(desc["a"], base), **flags)
    if kind == "separable":
        if "order" not in desc or not desc.get("terms"):
            raise InvalidParameterError("separable symbol needs 'order' and 'terms'")
        terms = []
        for term in desc["terms"]:
            g = term["g"]
            if isinstance(g, (int, float)):
                gf = SpectralField.constant(grid, [float(g)])
            else:
                gf = read_field(base / g)
                if gf.grid != grid:
                    raise InvalidParameterError(f"x-factor {g!r} is on a different grid")
            terms.append((gf, frequency_factor(term["a"], base)))
        return SymbolSpec("separable", float(desc["order"]), terms=terms, **flags)
    if kind == "gridded":
        if "order" not in desc or "values" not in desc:
            raise InvalidParameterError("gridded symbol needs 'order' and 'values'")
        values = np.load(base / desc["values"])
        if values.shape[-2 * grid.dim :] != grid.shape * 2:
            raise InvalidParameterError("gridded table shape does not match the grid")
        return SymbolSpec("gridded", float(desc["order"]), values=values, **flags)
    raise InvalidParameterError(f"unknown symbol kind {kind!r}")


def read_symbol(path: PathLike, grid: TorusGrid) -> SymbolSpec:
    path = Path(path)
    return symbol_from_dict(load_toml(path), grid, path.parent)
