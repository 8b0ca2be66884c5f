import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hermflow.torus import (GridError, ScalarField, complex_hessian, complex_laplacian, d_z,
                            d_zbar, make_grid, read_snapshot, to_physical, to_spectral,
                            write_snapshot)

from conftest import bandlimited

PI = np.pi


def cos_x1(grid):
    return ScalarField.from_function(grid, lambda x1, *rest: np.cos(2 * PI * x1))


class TestMakeGrid:
    def test_reduced_n2(self):
        g = make_grid(2, [16, 16, 1, 1], [1, 1, 1, 1])
        assert g.size == 256
        assert g.active_axes == (0, 1)

    def test_full_n3(self):
        g = make_grid(3, [8] * 6)
        assert g.size == 262144

    @pytest.mark.parametrize("res", [[6, 8, 1, 1], [8, 2, 1, 1], [8, 8, 1]])
    def test_rejects_bad_resolution(self, res):
        with pytest.raises(GridError):
            make_grid(2, res)

    def test_rejects_n(self):
        with pytest.raises(GridError):
            make_grid(4, [8] * 8)

    def test_rejects_nonpositive_period(self):
        with pytest.raises(GridError):
            make_grid(2, [8, 8, 1, 1], [1, 0, 1, 1])

    def test_volume(self):
        assert make_grid(2, [8, 8, 1, 1], [2, 3, 1, 1]).volume == pytest.approx(6.0)


class TestTransforms:
    def test_constant_is_zero_mode(self, grid2):
        c = to_spectral(np.ones(grid2.shape))
        assert c.flat[0] == pytest.approx(1.0)
        c.flat[0] = 0
        assert np.max(np.abs(c)) < 1e-15

    def test_cosine_two_modes(self, grid2):
        c = to_spectral(cos_x1(grid2).values)
        nz = np.argwhere(np.abs(c) > 1e-12)
        assert len(nz) == 2
        assert {tuple(i) for i in nz} == {(1, 0, 0, 0), (15, 0, 0, 0)}
        assert abs(c[1, 0, 0, 0]) == pytest.approx(abs(c[15, 0, 0, 0]))

    @given(st.integers(0, 2**31 - 1))
    def test_roundtrip(self, seed):
        g = make_grid(2, [8, 8, 1, 1])
        f = np.random.Generator(np.random.Philox(seed)).standard_normal(g.shape)
        back = to_physical(to_spectral(f))
        assert np.max(np.abs(back - f)) <= 1e-12 * np.max(np.abs(f))

    @given(st.integers(0, 2**31 - 1))
    def test_parseval(self, seed):
        g = make_grid(2, [8, 8, 1, 1])
        f = np.random.Generator(np.random.Philox(seed)).standard_normal(g.shape)
        assert np.mean(f ** 2) == pytest.approx(np.sum(np.abs(to_spectral(f)) ** 2), rel=1e-12)


class TestDerivatives:
    def test_constant(self, grid2):
        f = ScalarField.constant(grid2, 3.0)
        assert np.max(np.abs(d_z(f, 0).values)) == 0.0
        assert np.max(np.abs(complex_laplacian(f).values)) == 0.0

    def test_dz_cosine(self, grid2):
        x1 = grid2.coordinates()[0]
        got = d_z(cos_x1(grid2), 0).values
        want = np.broadcast_to(-PI * np.sin(2 * PI * x1), grid2.shape)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_plane_wave_multiplier(self):
        g = make_grid(2, [8, 8, 8, 8])
        k = np.array([1, 2, 0, 1])
        xs = g.coordinates()
        phase = sum(2 * PI * ki * x for ki, x in zip(k, xs))
        for part in (np.cos, np.sin):
            f = ScalarField(g, np.broadcast_to(part(phase), g.shape))
            lap = sum(d_zbar(ScalarField(g, d_z(f, a).values.real), a).values
                      + 1j * d_zbar(ScalarField(g, d_z(f, a).values.imag), a).values
                      for a in range(2))
            assert np.max(np.abs(lap - (-PI ** 2 * k @ k) * f.values)) < 1e-9

    def test_laplacian_cosine(self, grid2):
        got = complex_laplacian(cos_x1(grid2)).values
        assert np.max(np.abs(got + PI ** 2 * cos_x1(grid2).values)) < 1e-11

    def test_laplacian_vs_finite_differences(self):
        """Eighth-order central differences on an 8-point axis."""
        g = make_grid(2, [8, 8, 1, 1])
        f = bandlimited(g, 1.0, seed=3, max_k=1.5)
        h = 1.0 / 8
        w = [-1 / 560, 8 / 315, -1 / 5, 8 / 5, -205 / 72, 8 / 5, -1 / 5, 8 / 315, -1 / 560]
        v = f.values
        fd = sum(sum(c * np.roll(v, 4 - j, ax) for j, c in enumerate(w)) / h ** 2
                 for ax in (0, 1))
        ref = complex_laplacian(f).values
        assert np.max(np.abs(fd / 4 - ref)) / np.max(np.abs(ref)) < 1e-3

    def test_fd_converges_to_spectral(self):
        errs = []
        for m in (16, 32, 64):
            g = make_grid(2, [m, m, 1, 1])
            f = ScalarField.from_function(g, lambda x, y, *r: np.sin(2 * PI * (x + y)))
            h = 1.0 / m
            v = f.values
            fd = sum((np.roll(v, -1, ax) - 2 * v + np.roll(v, 1, ax)) / h ** 2 for ax in (0, 1))
            errs.append(np.max(np.abs(fd / 4 - complex_laplacian(f).values)))
        assert errs[2] < 1e-3 * 2 * PI ** 2
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_product_rule_band_limited(self):
        g = make_grid(2, [16, 16, 1, 1])
        f = bandlimited(g, 1.0, seed=5, max_k=3)
        h = bandlimited(g, 1.0, seed=6, max_k=3)
        fg = ScalarField(g, f.values * h.values)
        lhs = d_z(fg, 0).values
        rhs = f.values * d_z(h, 0).values + h.values * d_z(f, 0).values
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_hessian_hermitian(self, grid2_full):
        H = complex_hessian(bandlimited(grid2_full, 1.0, seed=8))
        assert np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2)))) < 1e-12

    def test_laplacian_matrix_symmetric(self, grid2_small):
        g = grid2_small
        eye = np.eye(g.size)
        A = np.array([complex_laplacian(ScalarField(g, e.reshape(g.shape))).values.ravel()
                      for e in eye]).T
        assert np.linalg.norm(A - A.T) <= 1e-12 * np.linalg.norm(A)
        assert np.max(np.abs(A.sum(axis=1))) < 1e-12


class TestScalarField:
    def test_nonfinite_rejected(self, grid2_small):
        v = np.zeros(grid2_small.shape)
        v[0, 0, 0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            ScalarField(grid2_small, v)

    def test_constant_shift_only_moves_zero_mode(self, grid2):
        f = bandlimited(grid2, 1e-2, seed=1)
        g = f + 5.0
        a, b = np.array(f.spectral), np.array(g.spectral)
        assert b.flat[0] - a.flat[0] == pytest.approx(5.0)
        a.flat[0] = b.flat[0] = 0
        assert np.array_equal(a, b)

    def test_immutable(self, grid2_small):
        f = ScalarField.constant(grid2_small, 1.0)
        with pytest.raises(ValueError):
            f.values[0] = 2.0


class TestSnapshot:
    def test_roundtrip(self, tmp_path, grid2):
        f = bandlimited(grid2, 0.3, seed=2)
        p = tmp_path / "u.bin"
        write_snapshot(p, f, "u", 0.25)
        header, g = read_snapshot(p)
        assert header["time"] == 0.25 and header["field_name"] == "u"
        assert np.array_equal(g.values, f.values)

    def test_header_is_json_line(self, tmp_path, grid2_small):
        p = tmp_path / "u.bin"
        write_snapshot(p, ScalarField.constant(grid2_small, 1.0))
        line = p.read_bytes().split(b"\n", 1)[0]
        assert json.loads(line)["resolution"] == [8, 8, 1, 1]

    def test_truncated_file(self, tmp_path, grid2_small):
        p = tmp_path / "u.bin"
        write_snapshot(p, ScalarField.constant(grid2_small, 1.0))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(ValueError):
            read_snapshot(p)
