import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import l2, sine
from epdiff_torus import commutator_lab as cl
from epdiff_torus.config import OUTPUT_ROOT_ENV, ConfigError, load_config, parse_config
from epdiff_torus.errors import InvalidParameterError, RealityError
from epdiff_torus.fileio import (
    atomic_write,
    dump_json,
    format_field,
    format_float,
    parse_field,
    read_field,
    symbol_from_dict,
    write_field,
)
from epdiff_torus.operators import apply, realize
from epdiff_torus.spectral_core import SpectralField, TorusGrid


class TestFieldFormat:
    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**16), dim=st.sampled_from([1, 2]), comps=st.sampled_from([1, 2]))
    def test_round_trip_exact(self, seed, dim, comps):
        grid = TorusGrid(dim, 16)
        f = cl.random_trig_field(grid, 7, np.random.default_rng(seed), comps)
        g = parse_field(format_field(f))
        assert g.grid == grid and g.components == comps
        assert np.array_equal(g.coeffs, f.coeffs)

    def test_header(self, grid32):
        assert format_field(sine(grid32)).splitlines()[0] == "EPDIFF-FIELD v1 d=1 N=32 c=1"

    def test_rejects_non_real(self, grid32):
        text = "EPDIFF-FIELD v1 d=1 N=32 c=1\n0 1 0.5 0.0\n0 -1 0.25 0.0\n"
        with pytest.raises(RealityError):
            parse_field(text)

    @pytest.mark.parametrize(
        "text",
        ["", "EPDIFF-FIELD v2 d=1 N=32 c=1\n", "EPDIFF-FIELD v1 d=1 N=32 c=1\n0 99 0 0\n",
         "EPDIFF-FIELD v1 d=1 N=32 c=1\n0 1 2\n"],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(InvalidParameterError):
            parse_field(text)

    def test_file_round_trip(self, tmp_path, grid32):
        write_field(tmp_path / "a" / "u.field", sine(grid32))
        assert l2(read_field(tmp_path / "a" / "u.field") - sine(grid32)) <= 1e-16


class TestJson:
    def test_seventeen_digits(self):
        assert format_float(0.1) == "1.0000000000000001e-01"

    def test_sorted_and_deterministic(self):
        a = dump_json({"b": [1, 2.5], "a": {"y": True, "x": None}})
        b = dump_json({"a": {"x": None, "y": True}, "b": (1, 2.5)})
        assert a == b
        assert json.loads(a) == {"a": {"x": None, "y": True}, "b": [1, 2.5]}

    def test_non_finite(self):
        assert json.loads(dump_json({"x": float("nan"), "y": float("inf")})) == {"x": "nan", "y": "inf"}

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        atomic_write(tmp_path / "out.txt", "hello\n")
        atomic_write(tmp_path / "out.txt", "again\n")
        assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
        assert (tmp_path / "out.txt").read_text() == "again\n"


class TestSymbolFiles:
    def test_multiplier_shorthand(self, grid32):
        spec = symbol_from_dict({"kind": "multiplier", "s": 1.0}, grid32)
        assert spec.order == 2.0
        assert l2(apply(realize(spec, grid32), sine(grid32)) - sine(grid32, 2.0)) < 1e-12

    def test_poly_multiplier(self, grid32):
        spec = symbol_from_dict(
            {"kind": "multiplier", "order": 2, "a": {"tag": "poly", "coeffs": [1.0, 1.0]}}, grid32
        )
        assert l2(apply(realize(spec, grid32), sine(grid32)) - sine(grid32, 2.0)) < 1e-12

    def test_separable_with_file_and_constant(self, tmp_path, grid32):
        g = SpectralField.from_function(grid32, lambda x: 1 + 0.5 * np.sin(2 * np.pi * x))
        write_field(tmp_path / "g.field", g)
        desc = {
            "kind": "separable",
            "order": 2.0,
            "terms": [
                {"g": "g.field", "a": {"tag": "bessel_power", "s": 1.0}},
                {"g": 0.5, "a": {"tag": "poly", "coeffs": [1.0]}},
            ],
        }
        spec = symbol_from_dict(desc, grid32, tmp_path)
        assert len(spec.terms) == 2
        assert realize(spec, grid32).shape == (31, 31)

    def test_grid_tag(self, tmp_path, grid32):
        table = SpectralField.from_vector(
            grid32, 1.0 + grid32.band_freqs[:, 0].astype(float) ** 2, 1
        )
        write_field(tmp_path / "a.field", table)
        spec = symbol_from_dict(
            {"kind": "multiplier", "order": 2, "a": {"tag": "grid", "file": "a.field"}}, grid32, tmp_path
        )
        assert l2(apply(realize(spec, grid32), sine(grid32)) - sine(grid32, 2.0)) < 1e-12

    def test_gridded_table(self, tmp_path, grid32):
        x = grid32.points[0]
        k = grid32.freqs[0]
        values = (1 + 0.5 * np.sin(2 * np.pi * x))[:, None] * (1.0 + k[None, :] ** 2)
        np.save(tmp_path / "t.npy", values)
        spec = symbol_from_dict({"kind": "gridded", "order": 2, "values": "t.npy"}, grid32, tmp_path)
        ref = symbol_from_dict(
            {"kind": "separable", "order": 2,
             "terms": [{"g": 1.0, "a": {"tag": "bessel_power", "s": 1.0}}]}, grid32
        )
        A, B = realize(spec, grid32), realize(ref, grid32)
        g = SpectralField.from_function(grid32, lambda x: 1 + 0.5 * np.sin(2 * np.pi * x))
        f = cl.random_trig_field(grid32, 5, np.random.default_rng(0))
        from epdiff_torus.spectral_core import pointwise_multiply

        assert l2(apply(A, f) - pointwise_multiply(g, apply(B, f))) <= 1e-10

    @pytest.mark.parametrize(
        "desc",
        [{"kind": "weird"}, {"kind": "multiplier"}, {"kind": "separable", "order": 1},
         {"kind": "multiplier", "order": 1, "a": {"tag": "nope"}}],
    )
    def test_rejects(self, desc, grid32):
        with pytest.raises(InvalidParameterError):
            symbol_from_dict(desc, grid32)


def base_config(**over):
    raw = {
        "kind": "geodesic_eulerian",
        "grid": {"dim": 1, "n": 32},
        "symbol": {"kind": "multiplier", "s": 1.0},
        "solver": {"dt": 0.01, "t_end": 0.1},
        "initial": {"modes": [{"component": 0, "k": [1], "sin": 0.1}]},
    }
    for key, value in over.items():
        section, _, field = key.partition("__")
        if field:
            raw.setdefault(section, {})[field] = value
        else:
            raw[section] = value
    return raw


class TestConfig:
    def test_parses(self, tmp_path, grid32):
        cfg = parse_config(base_config(), tmp_path)
        assert cfg.grid == grid32 and cfg.solver.dt == 0.01
        assert l2(cfg.initial - sine(grid32, 0.1)) < 1e-15

    @pytest.mark.parametrize(
        "over,field",
        [
            ({"solver__dt": 0.0}, "solver.dt"),
            ({"solver__dt": -1.0}, "solver.dt"),
            ({"solver__t_end": "soon"}, "solver.t_end"),
            ({"grid__n": 16}, "grid.n"),
            ({"grid__dim": 3}, "grid.dim"),
            ({"kind": "dance"}, "kind"),
            ({"seed": -1}, "seed"),
            ({"initial": {"modes": [{"k": [40], "sin": 1.0}]}}, "initial.modes[0].k"),
            ({"initial": {}}, "initial"),
            ({"symbol": {"kind": "multiplier", "s": 0.25}}, "symbol"),
        ],
    )
    def test_errors_name_the_field(self, tmp_path, over, field):
        with pytest.raises(ConfigError) as exc:
            parse_config(base_config(**over), tmp_path)
        assert exc.value.field == field

    def test_convergence_ladder_too_short(self, tmp_path):
        raw = base_config(kind="convergence", convergence={"parameter": "dt", "levels": [0.01, 0.005]})
        with pytest.raises(ConfigError) as exc:
            parse_config(raw, tmp_path)
        assert exc.value.field == "convergence.levels"

    def test_probe_ranges(self, tmp_path):
        raw = base_config(kind="probe_boundedness", probe={"q": 1.2})
        with pytest.raises(ConfigError) as exc:
            parse_config(raw, tmp_path)
        assert exc.value.field == "probe.q"

    def test_output_resolution(self, tmp_path, monkeypatch):
        monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
        assert parse_config(base_config(output="res"), tmp_path).output == tmp_path / "res"
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / "root"))
        assert parse_config(base_config(output="res"), tmp_path).output == tmp_path / "root" / "res"
        absolute = str(tmp_path / "abs")
        assert parse_config(base_config(output=absolute), tmp_path).output == Path(absolute)

    def test_load_toml_file(self, tmp_path):
        (tmp_path / "c.toml").write_text(
            'kind = "geodesic_eulerian"\n[grid]\nn = 32\n[symbol]\nkind = "multiplier"\ns = 1.0\n'
            "[solver]\ndt = 0.01\nt_end = 0.1\n[initial]\nconstant = [0.2]\n"
        )
        cfg = load_config(tmp_path / "c.toml")
        assert cfg.base_dir == tmp_path.resolve()
        assert cfg.initial.mean()[0] == pytest.approx(0.2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_bad_toml(self, tmp_path):
        (tmp_path / "c.toml").write_text("kind = \n")
        with pytest.raises(InvalidParameterError):
            load_config(tmp_path / "c.toml")
