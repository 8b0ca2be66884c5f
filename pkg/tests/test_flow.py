import math

import numpy as np
import pytest

from hermflow import flow
from hermflow.diagnostics import conservation_functional
from hermflow.flow import FlowParams, FlowState, Integrator, Status
from hermflow.torus import ScalarField, make_grid

from conftest import bandlimited

PI = np.pi


def cos_mode(grid, eps, k=(1, 0, 0, 0)):
    return ScalarField.from_function(
        grid, lambda *xs: eps * np.cos(2 * PI * sum(ki * x for ki, x in zip(k, xs))))


class TestParams:
    @pytest.mark.parametrize("kw", [{"scheme": "Euler"}, {"dt_min": 1e-3, "dt_init": 1e-4},
                                    {"tol_Q": 0.0}, {"curvature": "riemann"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            FlowParams(**kw)

    def test_dict_roundtrip(self):
        p = FlowParams(scheme="RK4-explicit", T_max=0.5)
        assert FlowParams(**p.to_dict()) == p


class TestController:
    def test_growth_cap(self):
        p = FlowParams(dt_max=1.0)
        dec = flow.dt_controller(0.0, 1e-4, p)
        assert dec.accepted and dec.dt <= 2e-4

    def test_clipped_to_dt_max(self):
        p = FlowParams()
        assert flow.dt_controller(0.0, p.dt_max, p).dt == p.dt_max

    def test_rejection_shrinks(self):
        dec = flow.dt_controller(1e3, 1e-4, FlowParams())
        assert not dec.accepted and dec.dt <= 0.5e-4

    def test_nan_error_rejects(self):
        assert not flow.dt_controller(float("nan"), 1e-4, FlowParams()).accepted


class TestStep:
    def test_constant_fixed_point(self, grid2):
        u = ScalarField.constant(grid2, 3.0)
        new = flow.step(FlowState(0.0, u, 0, 1e-4), FlowParams())
        assert np.array_equal(new.u.values, u.values)
        assert new.t == pytest.approx(1e-4)

    def test_exact_linear_decay(self, grid2):
        delta, dt = 1e-9, 1e-4
        u = cos_mode(grid2, delta)
        p = FlowParams(adaptive=False, dt_init=dt, dt_max=dt)
        new = flow.step(FlowState(0.0, u, 0, dt), p)
        ratio = new.u.spectral[1, 0, 0, 0].real / u.spectral[1, 0, 0, 0].real
        assert abs(ratio - math.exp(-PI ** 4 * dt)) <= 1e-10

    def test_fourth_order_local_error(self, grid2_small):
        """One full step against two half steps, both measured against a
        fine-step reference: the error drops by about 2^4."""
        integ = Integrator(grid2_small, FlowParams())
        u = ScalarField.from_function(
            grid2_small,
            lambda x, y, *r: 1e-2 * (np.cos(2 * PI * x) + 0.5 * np.sin(2 * PI * (x + 2 * y))))
        v = np.asarray(u.spectral)
        for h in (5e-5, 2.5e-5):
            ref = v
            for _ in range(64):
                ref = integ.etdrk4(ref, h / 64)
            full = integ.etdrk4(v, h)
            half = integ.etdrk4(integ.etdrk4(v, h / 2), h / 2)
            ratio = integ._sup(full - ref) / integ._sup(half - ref)
            assert ratio == pytest.approx(16.0, rel=0.15)

    def test_requires_running(self, grid2_small):
        st = FlowState(0.0, ScalarField.constant(grid2_small, 0.0), status=Status.CONVERGED)
        with pytest.raises(ValueError):
            flow.step(st, FlowParams())


class TestRun:
    def test_zero_converges_immediately(self, grid2):
        run = flow.run(ScalarField.constant(grid2, 0.0), FlowParams())
        assert run.status == Status.CONVERGED and run.final.t == 0.0
        assert len(run.rows) == 1

    def test_small_cosine_converges_to_constant(self, grid2):
        run = flow.run(cos_mode(grid2, 1e-3), FlowParams())
        assert run.status == Status.CONVERGED
        assert run.rows[-1][2] <= 1e-9
        u = run.final.u.values
        assert np.max(np.abs(u - u.mean())) <= 1e-8

    def test_dt_reaches_dt_max(self, grid2):
        run = flow.run(cos_mode(grid2, 1e-6), FlowParams())
        dt = run.series("dt")
        assert dt[-2] == pytest.approx(FlowParams().dt_max)

    def test_t_monotone_and_positive(self, grid2):
        run = flow.run(bandlimited(grid2, 1e-2, seed=7), FlowParams(T_max=0.02))
        t = run.series("t")
        assert np.all(np.diff(t) > 0)
        assert np.all(run.series("min_eig_psi") > 0)

    def test_large_amplitude_never_nan(self, grid2):
        run = flow.run(cos_mode(grid2, 1.0), FlowParams(T_max=0.01))
        assert run.status in (Status.POSITIVITY_LOST, Status.CONVERGED)
        assert np.all(np.isfinite(run.final.u.values))

    def test_positivity_lost_keeps_last_good_state(self, grid2):
        u0 = cos_mode(grid2, 0.05, (2, 1, 0, 0))
        run = flow.run(u0, FlowParams(T_max=0.01))
        assert run.status == Status.POSITIVITY_LOST
        assert run.final.u is u0

    def test_max_time(self, grid2):
        run = flow.run(cos_mode(grid2, 1e-3), FlowParams(T_max=1e-3))
        assert run.status == Status.MAX_TIME
        assert run.final.t == pytest.approx(1e-3)

    def test_diverged_after_repeated_rejections(self, grid2):
        p = FlowParams(err_rtol=1e-30, err_atol=0.0, T_max=0.01)
        run = flow.run(bandlimited(grid2, 1e-2, seed=1), p)
        assert run.status == Status.DIVERGED
        assert run.rejections >= flow.MAX_REJECTIONS

    def test_snapshots(self, grid2):
        run = flow.run(cos_mode(grid2, 1e-4), FlowParams(T_max=2e-3, snapshot_every=1))
        assert len(run.snapshots) == len(run.rows)
        assert run.snapshots[0][0] == 0.0

    def test_conservation(self, grid2):
        run = flow.run(bandlimited(grid2, 1e-2, seed=3), FlowParams(T_max=0.05))
        c = run.series("conservation")
        assert np.max(np.abs(c - c[0])) / abs(c[0]) <= 1e-8
        assert conservation_functional(run.final.u) == pytest.approx(c[-1], abs=1e-15)

    def test_monotone_decay(self, grid2):
        run = flow.run(bandlimited(grid2, 1e-3, seed=3), FlowParams())
        q2 = run.series("norm_Q_L2") ** 2
        assert np.all(np.diff(q2) <= 0)

    def test_deterministic(self, grid2):
        u0 = bandlimited(grid2, 1e-2, seed=5)
        a = flow.run(u0, FlowParams(T_max=0.02))
        b = flow.run(u0, FlowParams(T_max=0.02))
        assert a.rows == b.rows
        assert a.final.u.spectral.tobytes() == b.final.u.spectral.tobytes()


class TestSchemes:
    @pytest.fixture(scope="class")
    @staticmethod
    def setup():
        g = make_grid(2, [8, 8, 1, 1])
        u0 = bandlimited(g, 2e-3, seed=4)
        ref = flow.run(u0, FlowParams(T_max=0.01, tol_Q=1e-300))
        return u0, ref

    def test_rk4_agrees(self, setup):
        u0, ref = setup
        run = flow.run(u0, FlowParams(scheme="RK4-explicit", T_max=0.01, dt_max=5e-5, dt_init=1e-5,
                                      tol_Q=1e-300))
        assert run.final.t == pytest.approx(0.01)
        assert np.max(np.abs(run.final.u.values - ref.final.u.values)) <= 1e-6

    def test_imex_bdf2_agrees(self, setup):
        u0, ref = setup
        run = flow.run(u0, FlowParams(scheme="IMEX-BDF2", T_max=0.01, dt_init=1e-5, dt_max=1e-5,
                                      tol_Q=1e-300))
        assert run.final.t == pytest.approx(0.01)
        assert np.max(np.abs(run.final.u.values - ref.final.u.values)) <= 1e-6

    def test_kahler_path_trajectory(self):
        g = make_grid(2, [8, 8, 8, 8])
        u0 = bandlimited(g, 1e-3, seed=8)
        a = flow.run(u0, FlowParams(T_max=0.002, tol_Q=1e-300))
        b = flow.run(u0, FlowParams(T_max=0.002, tol_Q=1e-300, curvature="kahler"))
        assert np.max(np.abs(a.final.u.values - b.final.u.values)) <= 1e-8
