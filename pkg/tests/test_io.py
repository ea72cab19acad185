import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from kinfp.core import Frame, KineticParams, PhaseGrid, SpectralField, is_hermitian, mode_vectors
from kinfp.io import (
    ConfigError, FieldFileError, GeneratorSpec, csv_text, generate_field, generate_source, load_config,
    parse_config, read_field, write_csv, write_field,
)


def grid(**kw):
    base = dict(n_x=8, n_v=16, half_len_x=math.pi, half_len_v=2 * math.pi, t_start=0.0, t_end=1.0, n_t=6)
    base.update(kw)
    return PhaseGrid(**base)


def base_config(**over):
    cfg = {
        "command": "SolveKolmogorov",
        "params": {"beta": 0.5, "dim": 1},
        "grid": dict(n_x=8, n_v=16, half_len_x=3.0, half_len_v=6.0, t_start=0.0, t_end=1.0, n_t=8),
        "source": {"generator": "zero"},
    }
    cfg.update(over)
    return cfg


class TestFieldFile:
    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(0, 2**31), dim=st.sampled_from([1, 2]))
    def test_roundtrip_bit_exact(self, tmp_path_factory, seed, dim):
        g = grid(dim=dim, n_x=4, n_v=6, n_t=3)
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(g.field_shape) + 1j * rng.standard_normal(g.field_shape)
        f = SpectralField(c, Frame.GALILEAN, g)
        path = tmp_path_factory.mktemp("f") / "x.kfp"
        write_field(path, f, KineticParams(0.75, dim))
        back, p = read_field(path)
        assert np.array_equal(back.values, f.values)
        assert back.frame is Frame.GALILEAN and back.grid == g
        assert p == KineticParams(0.75, dim)

    def test_hermitian_flag_validated(self, tmp_path):
        g = grid()
        f = generate_field(GeneratorSpec("random-band-limited", frame="physical"), g, 1)
        write_field(tmp_path / "h.kfp", f)
        assert read_field(tmp_path / "h.kfp")[0].values is not None
        bad = f.with_values(f.values * 1j)
        write_field(tmp_path / "b.kfp", bad, hermitian=True)
        with pytest.raises(FieldFileError):
            read_field(tmp_path / "b.kfp")

    def test_bad_magic_and_truncation(self, tmp_path):
        (tmp_path / "m.kfp").write_bytes(b"NOPE 1\n{}\n")
        with pytest.raises(FieldFileError):
            read_field(tmp_path / "m.kfp")
        g = grid()
        write_field(tmp_path / "t.kfp", SpectralField.zeros(g, Frame.PHYSICAL))
        data = (tmp_path / "t.kfp").read_bytes()
        (tmp_path / "t.kfp").write_bytes(data[:-16])
        with pytest.raises(FieldFileError):
            read_field(tmp_path / "t.kfp")


class TestCsv:
    def test_header_and_rows(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["a", "b"], [{"a": 1, "b": "x"}])
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines == ["# kinfp-csv v1", "a,b", "1,x"]

    def test_text_deterministic(self):
        rows = [{"a": 0.1, "b": 2}]
        assert csv_text(["a", "b"], rows) == csv_text(["a", "b"], rows)


class TestGenerators:
    def test_single_mode(self):
        g = grid()
        f = generate_field(GeneratorSpec("single-mode", phi=(1.0,), xi=(2.0,), envelope="constant"), g)
        assert all(np.count_nonzero(f.values[n]) == 1 for n in range(g.n_t + 1))
        phi, xi = mode_vectors(g)
        idx = np.nonzero(f.values[0])
        assert phi[idx][0, 0] == 1.0 and xi[idx][0, 0] == 2.0

    def test_band_limited(self):
        g = grid(n_v=32)
        f = generate_field(GeneratorSpec("random-band-limited", frame="physical", band=(1.0, 3.0)), g, 5)
        phi, xi = mode_vectors(g)
        r = np.maximum(np.abs(phi[..., 0]), np.abs(xi[..., 0]))
        assert not np.any(f.values[:, r > 3.0])
        assert np.any(f.values)
        assert is_hermitian(f)

    def test_seeded(self):
        g = grid()
        spec = GeneratorSpec("random-band-limited")
        a, b = generate_field(spec, g, 3), generate_field(spec, g, 3)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, generate_field(spec, g, 4).values)

    def test_zero_and_source_part(self):
        S = generate_source(GeneratorSpec("zero", part="s2"), grid())
        assert S.s2 is not None and S.s1 is None and not np.any(S.s2.values)

    @pytest.mark.parametrize("kw", [dict(generator="nope"), dict(part="s4"), dict(band=(3.0, 1.0)),
                                    dict(frame="lab")])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            GeneratorSpec(**kw)

    def test_envelope_vanishes_at_ends(self):
        g = grid()
        f = generate_field(GeneratorSpec("single-mode", phi=(1.0,), xi=(1.0,)), g)
        assert not np.any(f.values[0]) and not np.any(f.values[-1])


class TestConfig:
    def test_parse(self):
        cfg = parse_config(base_config())
        assert cfg.params.beta == 0.5 and cfg.grid.n_t == 8 and cfg.seed == 0

    @pytest.mark.parametrize("mutate", [
        lambda c: c.update(bogus=1),
        lambda c: c["grid"].update(n_q=3),
        lambda c: c["params"].update(beta=-1.0),
        lambda c: c.update(command="Explode"),
        lambda c: c.update(seed=-3),
        lambda c: c.update(verify={"estimates": ["K9"]}),
    ])
    def test_rejects(self, mutate):
        cfg = base_config()
        mutate(cfg)
        with pytest.raises(ConfigError):
            parse_config(cfg)

    def test_load(self, tmp_path):
        (tmp_path / "c.yaml").write_text(yaml.safe_dump(base_config()))
        assert load_config(tmp_path / "c.yaml").command.value == "SolveKolmogorov"
        (tmp_path / "bad.yaml").write_text("command: [unclosed")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.yaml")
