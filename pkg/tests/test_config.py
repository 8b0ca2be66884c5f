import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hermflow import config as cfgmod
from hermflow.config import ConfigError, parse_config, serialize
from hermflow.flow import FlowParams
from hermflow.torus import make_grid, write_snapshot

MINIMAL = {"n": 2, "resolution": [16, 16, 1, 1], "ic": {"family": "zero"}}


def doc(**over):
    d = json.loads(json.dumps(MINIMAL))
    d.update(over)
    return d


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.flow == FlowParams()
        assert cfg.diagnostics == cfgmod.DIAGNOSTIC_DEFAULTS
        assert cfg.output_dir == cfgmod.DEFAULT_OUTPUT_DIR
        assert list(cfg.grid.active_axes) == [0, 1]
        assert cfg.grid.periods == (1.0,) * 4

    def test_nan_amplitude_pointer(self):
        text = ('{"n": 2, "resolution": [16,16,1,1], '
                '"ic": {"family": "single_mode", "amplitude": NaN, "wave_vector": [1,0,0,0]}}')
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        assert "/ic/amplitude" in exc.value.pointers

    def test_collects_all_violations(self):
        d = doc(n=5, flow={"scheme": "Euler"}, extra=1)
        d["ic"] = {"family": "random_bandlimited", "amplitude": -1}
        with pytest.raises(ConfigError) as exc:
            parse_config(d)
        ptrs = exc.value.pointers
        assert "/n" in ptrs and "/flow/scheme" in ptrs and "" in ptrs
        assert len(exc.value.violations) >= 4

    def test_random_requires_seed(self):
        d = doc(ic={"family": "random_bandlimited", "amplitude": 1e-2, "max_k": 3})
        with pytest.raises(ConfigError) as exc:
            parse_config(d)
        assert any("seed" in msg for _, msg in exc.value.violations)

    @pytest.mark.parametrize("vec,ptr", [([8, 0, 0, 0], "/ic/wave_vector/0"),
                                         ([1, 0, 1, 0], "/ic/wave_vector/2")])
    def test_wave_vector_bounds(self, vec, ptr):
        d = doc(ic={"family": "single_mode", "amplitude": 1e-3, "wave_vector": vec})
        with pytest.raises(ConfigError) as exc:
            parse_config(d)
        assert ptr in exc.value.pointers

    def test_multi_mode_pointer(self):
        d = doc(ic={"family": "multi_mode", "modes": [
            {"amplitude": 1e-3, "wave_vector": [1, 0, 0, 0]},
            {"amplitude": 1e-3, "wave_vector": [0, 9, 0, 0]}]})
        with pytest.raises(ConfigError) as exc:
            parse_config(d)
        assert exc.value.pointers == ["/ic/modes/1/wave_vector/1"]

    def test_bad_resolution(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(doc(resolution=[15, 16, 1, 1]))
        assert "/resolution" in exc.value.pointers

    def test_active_axes_must_match(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(doc(active_axes=[0, 1, 2]))
        assert exc.value.pointers == ["/active_axes"]

    def test_flow_cross_field(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(doc(flow={"dt_min": 1e-2, "dt_init": 1e-4}))
        assert "/flow" in exc.value.pointers

    def test_malformed_json(self):
        with pytest.raises(ConfigError):
            parse_config("{not json")

    def test_shipped_scenarios_parse(self, scenario_paths):
        for p in scenario_paths:
            cfgmod.load_config(p)


@st.composite
def scenario_docs(draw):
    n = draw(st.sampled_from([2, 3]))
    res = [draw(st.sampled_from([1, 4, 8])) for _ in range(2 * n)]
    res[0] = draw(st.sampled_from([4, 8, 16]))
    fam = draw(st.sampled_from(["zero", "single_mode", "random_bandlimited"]))
    ic = {"family": fam}
    if fam == "single_mode":
        vec = [0] * (2 * n)
        vec[0] = draw(st.integers(-(res[0] // 2) + 1, res[0] // 2 - 1))
        ic.update(amplitude=draw(st.floats(1e-8, 1e-2)), wave_vector=vec)
    elif fam == "random_bandlimited":
        ic.update(amplitude=draw(st.floats(1e-8, 1e-2)), max_k=1.0,
                  seed=draw(st.integers(0, 2**31)))
    return {"n": n, "resolution": res, "ic": ic,
            "flow": {"T_max": draw(st.floats(1e-3, 10.0)),
                     "scheme": draw(st.sampled_from(["ETDRK4", "IMEX-BDF2", "RK4-explicit"]))}}


class TestRoundtrip:
    @given(scenario_docs())
    def test_serialize_parse(self, d):
        cfg = parse_config(d)
        again = parse_config(serialize(cfg))
        assert again == cfg
        assert serialize(again) == serialize(cfg)

    @given(scenario_docs())
    def test_normalize_idempotent(self, d):
        once = cfgmod.normalize(d)
        assert cfgmod.normalize(once) == once


class TestRandomIC:
    @given(st.integers(0, 2**32 - 1))
    def test_properties(self, seed):
        g = make_grid(2, [8, 8, 1, 1])
        u = cfgmod.random_bandlimited(g, 1e-2, 3, seed)
        assert abs(u.mean()) <= 1e-17
        assert np.max(np.abs(u.values)) == pytest.approx(1e-2, rel=1e-14)
        assert np.all(u.spectral[g.nyquist_mask] == 0)

    def test_deterministic(self, grid2_full):
        a = cfgmod.random_bandlimited(grid2_full, 1e-2, 3, 11)
        b = cfgmod.random_bandlimited(grid2_full, 1e-2, 3, 11)
        assert a.values.tobytes() == b.values.tobytes()

    def test_band_limit(self, grid2_full):
        u = cfgmod.random_bandlimited(grid2_full, 1.0, 1.5, 3)
        kk = sum(np.asarray(k, dtype=float) ** 2 for k in grid2_full.wave_ints)
        assert np.all(u.spectral[kk > 1.5 ** 2] == 0)


class TestInitialConditions:
    def test_single_mode(self):
        cfg = parse_config(doc(ic={"family": "single_mode", "amplitude": 0.5,
                                   "wave_vector": [1, 0, 0, 0]}))
        u = cfgmod.initial_condition(cfg)
        assert u.values[0, 0, 0, 0] == 0.5
        assert u.spectral[1, 0, 0, 0].real == pytest.approx(0.25)

    def test_multi_mode_superposes(self):
        cfg = parse_config(doc(ic={"family": "multi_mode", "modes": [
            {"amplitude": 1.0, "wave_vector": [1, 0, 0, 0]},
            {"amplitude": 2.0, "wave_vector": [0, 2, 0, 0], "phase": 0.5}]}))
        u = cfgmod.initial_condition(cfg)
        assert u.values[0, 0, 0, 0] == pytest.approx(1.0 + 2.0 * np.cos(0.5))

    def test_from_file_relative(self, tmp_path, grid2):
        src = cfgmod.random_bandlimited(grid2, 1e-3, 3, 1)
        write_snapshot(tmp_path / "u0.bin", src, "u", 0.0)
        p = tmp_path / "s.json"
        p.write_text(json.dumps(doc(ic={"family": "from_file", "path": "u0.bin"})))
        u = cfgmod.initial_condition(cfgmod.load_config(p))
        assert np.array_equal(u.values, src.values)

    def test_from_file_grid_mismatch(self, tmp_path, grid2_small):
        write_snapshot(tmp_path / "u0.bin", cfgmod.random_bandlimited(grid2_small, 1e-3, 2, 1))
        p = tmp_path / "s.json"
        p.write_text(json.dumps(doc(ic={"family": "from_file", "path": "u0.bin"})))
        with pytest.raises(ValueError):
            cfgmod.initial_condition(cfgmod.load_config(p))
