import math

import numpy as np
import pytest

from trafficwave.analysis import convergence_order
from trafficwave.control import ClosedLoop, OpenLoopConstant
from trafficwave.errors import ConfigurationError, ControllerError, InvariantViolation
from trafficwave.model import RiemannState, riemann_from_physical
from trafficwave.profiles import Constant, OnDiagram, StepMixture, equilibrium_profiles
from trafficwave.scheme import (Grid, RunDiagnostics, build_grid, init_state,
                                min_admissible_N, simulate, step)

W_RHO2 = 0.6451917355621804


class TestGrid:
    def test_worked_example_grid(self, params):
        g = build_grid(10.0, 100, np.full(101, 0.4), params)
        assert g.v_bar == 5.0
        assert g.lam == pytest.approx(10 / 51, rel=1e-15)
        assert g.m == 5100
        assert g.h == 0.01
        assert g.delta == pytest.approx(10 / 5100, rel=1e-15)
        assert g.m * g.delta == pytest.approx(10.0, rel=1e-14)
        assert g.time(g.m) == 10.0

    def test_cfl(self, params):
        for T in (0.3, 1.0, 7.7, 20.0):
            g = build_grid(T, 10, np.array([0.1, 0.9]), params)
            assert g.lam * g.v_bar <= 1.0
            assert g.lam * params.c <= 1.0

    def test_fast_initial_speed_sets_v_bar(self, params):
        g = build_grid(1.0, 10, np.array([0.5, 7.5]), params)
        assert g.v_bar == 7.5
        assert g.lam * 7.5 <= 1.0

    def test_min_N(self, params):
        assert min_admissible_N(params) == 3
        build_grid(10.0, 3, np.ones(4), params)

    def test_N_too_small(self, params):
        with pytest.raises(ConfigurationError, match="minimal admissible N is 3"):
            build_grid(10.0, 2, np.ones(3), params)

    @pytest.mark.parametrize("T,N", [(0.0, 10), (-1.0, 10), (1.0, 0), (1.0, 2.5)])
    def test_bad_arguments(self, params, T, N):
        with pytest.raises(ConfigurationError):
            build_grid(T, N, np.ones(11), params)

    def test_step_index(self, params):
        g = build_grid(10.0, 100, np.ones(101) * 0.4, params)
        assert g.step_index(6.58) == 3356
        assert g.step_index(100.0) == g.m


class TestInitState:
    def test_equilibrium(self, params):
        g = build_grid(1.0, 10, np.ones(11), params)
        s = init_state(*equilibrium_profiles(1.0, params), g, params, 1.0)
        np.testing.assert_array_equal(s.w, 0.0)
        np.testing.assert_array_equal(s.v, params.f(1.0))

    def test_worked_example_nodes(self, params, sec4_profiles):
        g = build_grid(1.0, 10, np.ones(11), params)
        s = init_state(*sec4_profiles, g, params, 1.0)
        assert s.w[3] == 0.0
        assert s.w[7] == pytest.approx(W_RHO2, rel=1e-14)
        assert s.v[7] == pytest.approx(params.f(2.0), rel=1e-15)

    def test_nonpositive_sample_named(self, params):
        g = build_grid(1.0, 10, np.ones(11), params)
        rho0 = lambda x: 1.0 if x < 0.55 else 0.0
        with pytest.raises(ConfigurationError, match="node 6"):
            init_state(rho0, Constant(0.4), g, params, 1.0)


def _hand_grid():
    return Grid(N=4, lam=0.1, T=1.0, m=40, v_bar=5.0)


class TestStep:
    def test_hand_example(self, params):
        state = RiemannState(w=np.array([0.0, 0.5, 0.5, 0.5, 0.5]), v=np.full(5, 0.4), t=0.0,
                             rho_eq=1.0)
        demand = lambda t, v: ClosedLoop(1.0).demand(t, v, params)
        new = step(state, _hand_grid(), params, demand)
        assert new.w[1] == pytest.approx(0.48, rel=1e-15)
        np.testing.assert_array_equal(new.w[2:], 0.5)
        assert new.t == pytest.approx(0.025, rel=1e-15)
        # interior v is constant so only the outlet moves
        np.testing.assert_array_equal(new.v[:-1], 0.4)

    def test_equilibrium_fixed_point(self, params):
        g = build_grid(1.0, 20, np.ones(21), params)
        s = init_state(*equilibrium_profiles(1.0, params), g, params, 1.0)
        demand = lambda t, v: ClosedLoop(1.0).demand(t, v, params)
        for _ in range(50):
            s = step(s, g, params, demand)
        np.testing.assert_array_equal(s.w, 0.0)
        np.testing.assert_array_equal(s.v, params.f(1.0))

    def test_v_convexity(self, params):
        rng = np.random.default_rng(11)
        g = build_grid(1.0, 30, np.ones(31), params)
        for _ in range(20):
            v = rng.uniform(0.05, 1.0, 31)
            w = rng.uniform(-1.0, 1.0, 31)
            s = RiemannState(w=w, v=v, t=0.0, rho_eq=1.0)
            new = step(s, g, params, 0.4)
            assert np.all(new.v[:-1] >= v.min()) and np.all(new.v[:-1] <= v.max())
            assert np.all(new.w[1:] >= w.min()) and np.all(new.w[1:] <= w.max())

    def test_constant_demand_accepted(self, params):
        g = build_grid(1.0, 10, np.ones(11), params)
        s = init_state(*equilibrium_profiles(1.0, params), g, params, 1.0)
        new = step(s, g, params, 0.4)
        assert new.w[0] == pytest.approx(0.0, abs=1e-15)

    def test_negative_speed_rejected(self, params):
        v = np.full(5, 0.4)
        v[2] = -1e-3
        s = RiemannState(w=np.zeros(5), v=v, t=0.0, rho_eq=1.0)
        with pytest.raises(InvariantViolation, match="node 2"):
            step(s, _hand_grid(), params, 0.4)

    def test_wrong_size_rejected(self, params):
        s = RiemannState(w=np.zeros(6), v=np.full(6, 0.4), t=0.0, rho_eq=1.0)
        with pytest.raises(ConfigurationError):
            step(s, _hand_grid(), params, 0.4)

    def test_nonpositive_demand(self, params):
        s = RiemannState(w=np.zeros(5), v=np.full(5, 0.4), t=0.0, rho_eq=1.0)
        with pytest.raises(ControllerError):
            step(s, _hand_grid(), params, lambda t, v: 0.0)


class TestSimulate:
    def test_equilibrium_run(self, params):
        res = simulate(params, *equilibrium_profiles(1.0, params), ClosedLoop(1.0), 1.0, 50,
                       snapshot_times=(0.0, 1.0))
        d = res.diagnostics
        np.testing.assert_array_equal(d.X, 0.0)
        np.testing.assert_array_equal(d.sup_abs_w, 0.0)
        assert len(d) == res.grid.m + 1
        assert set(res.snapshots) == {0.0, 1.0}
        np.testing.assert_array_equal(res.snapshots[1.0].rho, 1.0)

    def test_diagnostic_invariants(self, params, sec4_profiles):
        res = simulate(params, *sec4_profiles, ClosedLoop(1.0), 2.0, 60)
        d = res.diagnostics
        assert np.all(np.diff(d.t) > 0)
        assert np.all(d.X >= 0)
        assert d.t[-1] == 2.0
        assert d.X[0] == pytest.approx(math.log(2) + 1, rel=1e-12)
        assert RunDiagnostics.COLUMNS == ("t", "X", "sup_abs_w", "min_v", "max_v", "max_rho", "q")

    def test_closed_loop_inlet_zero(self, params, sec4_profiles):
        res = simulate(params, *sec4_profiles, ClosedLoop(1.0), 2.0, 60)
        assert np.max(np.abs(res.diagnostics.inlet_w)) <= 1e-13

    def test_snapshot_times(self, params, sec4_profiles):
        res = simulate(params, *sec4_profiles, ClosedLoop(1.0), 2.0, 40,
                       snapshot_times=(0.0, 0.5, 1.37))
        snap = res.snapshots[1.37]
        assert abs(snap.t - 1.37) <= res.grid.delta / 2
        np.testing.assert_array_equal(snap.x, np.arange(41) / 40)
        assert snap.physical().rho.shape == (41,)

    def test_snapshot_outside_horizon(self, params, sec4_profiles):
        with pytest.raises(ConfigurationError):
            simulate(params, *sec4_profiles, ClosedLoop(1.0), 1.0, 10, snapshot_times=(2.0,))

    def test_controller_error(self, params, sec4_profiles):
        class Broken(OpenLoopConstant):
            def demand(self, t, v0, p):
                return 0.4 if t < 0.1 else -1.0

        with pytest.raises(ControllerError):
            simulate(params, *sec4_profiles, Broken(0.4, 1.0), 0.5, 10)

    def test_deterministic(self, params, sec4_profiles):
        a = simulate(params, *sec4_profiles, OpenLoopConstant(0.4, 1.0), 1.0, 40).diagnostics
        b = simulate(params, *sec4_profiles, OpenLoopConstant(0.4, 1.0), 1.0, 40).diagnostics
        for name in RunDiagnostics.COLUMNS:
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_smooth_data_first_order(self, params):
        rho0 = StepMixture.build([1.0, 1.5], [(0.2, 0.8)])
        v0 = OnDiagram(rho0, params)
        rep = convergence_order(lambda n: simulate(params, rho0, v0, ClosedLoop(1.0), 0.5, n),
                                [100, 200, 400])
        assert all(r >= 1.5 for r in rep.ratios)
        assert all(0.5 < p < 1.5 for p in rep.orders)

    def test_riemann_consistency(self, params, sec4_profiles):
        res = simulate(params, *sec4_profiles, OpenLoopConstant(0.4, 1.0), 1.0, 40)
        fin = res.final_physical()
        np.testing.assert_allclose(riemann_from_physical(fin.rho, fin.v, params, 1.0),
                                   res.final.w, rtol=1e-12, atol=1e-14)
