import numpy as np
import pytest

from nltraffic import (Bump, DensityField, DomainError, Grid, KernelScale,
                       MonotoneRamp, PositivityError, Riemann, SolverConfig,
                       Trajectory, VelocityModel, l1_distance, make_initial,
                       picard_oracle, solve_nonlocal, stability_gap,
                       total_variation)
from nltraffic.core import BlowupError, TimeStepCollapse
from nltraffic.nonlocal_fv import ContractionFailure, _ContractionTracker
from nltraffic.trajectory import DtSummary, Snapshot

from conftest import random_bv_field


def _solve(ic, model, eps, **kw):
    return solve_nonlocal(ic, model, KernelScale(eps), SolverConfig(**kw))


class TestSolveNonlocal:
    def test_constant_stays_constant(self, model):
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = DensityField(g, np.full(64, 0.4))
        for eps in (0.01, 0.3):
            traj = _solve(ic, model, eps, t_final=0.7)
            assert np.max(np.abs(traj.final.rho.values - 0.4)) < 1e-14

    def test_max_principle_riemann(self, model):
        g = Grid(-1.0, 1.0, 512, "constant_extension")
        ic = make_initial(g, Riemann(0.2, 0.8, 0.0))
        traj = _solve(ic, model, 0.05, t_final=0.5)
        assert traj.rho_min_seen >= 0.2 - 1e-12
        assert traj.rho_max_seen <= 0.8 + 1e-12

    def test_tv_bound_positive_data(self, model):
        g = Grid(-1.0, 1.0, 512, "constant_extension")
        ic = make_initial(g, Riemann(0.2, 0.8, 0.0))
        traj = _solve(ic, model, 0.05, t_final=0.5)
        assert total_variation(traj.final.rho) <= (0.8 / 0.2) * 0.6 * (1 + 1e-8)

    def test_mass_conservation_periodic(self, model):
        g = Grid(-1.0, 1.0, 256, "periodic")
        ic = random_bv_field(g, np.random.default_rng(0))
        traj = _solve(ic, model, 0.1, t_final=0.6)
        drift = abs(traj.final.rho.total_mass() - ic.total_mass())
        assert drift <= 1e-12 * ic.total_mass()

    @pytest.mark.parametrize("left,right", [(0.2, 0.8), (0.8, 0.2)])
    def test_monotone_data_stay_monotone(self, model, left, right):
        g = Grid(-1.0, 1.0, 256, "constant_extension")
        ic = make_initial(g, MonotoneRamp(left, right, -0.3, 0.3))
        traj = _solve(ic, model, 0.1, t_final=0.5)
        diffs = np.diff(traj.final.rho.values)
        if left <= right:
            assert np.all(diffs >= -1e-12)
        else:
            assert np.all(diffs <= 1e-12)

    def test_rerun_bitwise_identical(self, model):
        g = Grid(-1.0, 1.0, 128, "periodic")
        ic = random_bv_field(g, np.random.default_rng(1))
        a = _solve(ic, model, 0.1, t_final=0.3)
        b = _solve(ic, model, 0.1, t_final=0.3)
        assert np.array_equal(a.final.rho.values, b.final.rho.values)

    def test_snapshot_requests_do_not_disturb_state(self, model):
        # base step is cfl*dx/v(0); with power-of-two numbers the requested
        # times land exactly on step boundaries and no clamping occurs
        g = Grid(-1.0, 1.0, 256, "periodic")
        ic = random_bv_field(g, np.random.default_rng(2))
        t_final = 0.5
        a = _solve(ic, model, 0.1, t_final=t_final,
                   snapshot_times=(0.125, 0.25))
        b = _solve(ic, model, 0.1, t_final=t_final, snapshot_times=(0.25,))
        fa = a.at_time(0.25).rho.values
        fb = b.at_time(0.25).rho.values
        assert np.array_equal(fa, fb)
        assert np.array_equal(a.final.rho.values, b.final.rho.values)

    def test_snapshots_carry_q(self, model):
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = random_bv_field(g, np.random.default_rng(3))
        traj = _solve(ic, model, 0.1, t_final=0.2, snapshot_times=(0.1,))
        assert all(s.q is not None for s in traj.snapshots)
        assert [s.t for s in traj.snapshots] == [0.0, 0.1, 0.2]

    def test_l1_stability_ratio(self, model):
        g = Grid(-1.0, 1.0, 256, "periodic")
        x = g.cell_centers()
        base = DensityField(g, 0.5 + 0.2 * np.sin(np.pi * x))
        pert = DensityField(g, base.values + 0.01 * (x < 0.0))
        snaps = tuple(np.linspace(0.0, 0.5, 6)[1:-1])
        a = _solve(base, model, 0.1, t_final=0.5, snapshot_times=snaps)
        b = _solve(pert, model, 0.1, t_final=0.5, snapshot_times=snaps)
        sup, times, ratios = stability_gap(a, b)
        assert ratios[0] == 1.0
        assert np.isfinite(sup)

    def test_initial_range_checked(self, model):
        g = Grid(-1.0, 1.0, 16)
        with pytest.raises(DomainError):
            _solve(DensityField(g, np.full(16, 1.2)), model, 0.1, t_final=0.1)

    def test_time_step_collapse(self):
        # free-flow speed so large that the stable step stagnates
        racing = VelocityModel.affine(1e16, 1e16)
        g = Grid(-1.0, 1.0, 16)
        ic = DensityField(g, np.full(16, 0.4))
        with pytest.raises(TimeStepCollapse):
            _solve(ic, racing, 0.1, t_final=0.1)

    def test_blowup_detected(self):
        # evaluator turns NaN once the average exceeds a threshold
        model = VelocityModel.custom(
            v=lambda r: np.where(np.asarray(r) > 0.6, np.nan,
                                 1.0 - np.asarray(r, dtype=float)),
            dv=lambda r: np.full_like(np.asarray(r, dtype=float), -1.0),
            d2v=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
            v_inverse=lambda s: 1.0 - np.asarray(s, dtype=float),
            rho_jam=1.0)
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = DensityField(g, np.full(64, 0.8))
        with pytest.raises(BlowupError):
            _solve(ic, model, 0.1, t_final=0.2)


class TestTrajectoryInvariants:
    def test_first_snapshot_at_zero(self, model):
        g = Grid(-1.0, 1.0, 8)
        f = DensityField(g, np.full(8, 0.5))
        with pytest.raises(DomainError):
            Trajectory(model=model, eps=None,
                       snapshots=(Snapshot(t=0.5, rho=f),),
                       step_count=0, dt_summary=DtSummary(0, 0, 0, 0),
                       rho_min_seen=0.5, rho_max_seen=0.5)

    def test_strictly_increasing_times(self, model):
        g = Grid(-1.0, 1.0, 8)
        f = DensityField(g, np.full(8, 0.5))
        with pytest.raises(DomainError):
            Trajectory(model=model, eps=None,
                       snapshots=(Snapshot(t=0.0, rho=f),
                                  Snapshot(t=0.0, rho=f)),
                       step_count=0, dt_summary=DtSummary(0, 0, 0, 0),
                       rho_min_seen=0.5, rho_max_seen=0.5)


class TestPicardOracle:
    def test_constant_data(self, model):
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = DensityField(g, np.full(64, 0.55))
        res = picard_oracle(ic, model, KernelScale(0.2), 0.08)
        assert np.max(np.abs(res.field.values - 0.55)) < 1e-12

    def test_zero_horizon_returns_initial(self, model):
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = DensityField(g, np.full(64, 0.55))
        res = picard_oracle(ic, model, KernelScale(0.2), 0.0)
        assert res.iterations == 0
        assert np.array_equal(res.field.values, ic.values)

    def test_matches_solver_on_smooth_bump(self, model):
        g = Grid(-1.0, 1.0, 512, "periodic")
        ic = make_initial(g, Bump(0.4, 0.2, -0.2, 0.3))
        t0 = 0.05
        res = picard_oracle(ic, model, KernelScale(0.2), t0, 1e-10)
        traj = _solve(ic, model, 0.2, t_final=t0)
        # frozen from a dx-refinement study: distance/dx levels off near 0.045
        assert l1_distance(res.field, traj.final.rho) <= 0.1 * g.dx
        assert res.iterations <= 30

    def test_requires_positive_data(self, model):
        g = Grid(-1.0, 1.0, 64, "periodic")
        ic = DensityField(g, np.full(64, 0.0))
        with pytest.raises(PositivityError):
            picard_oracle(ic, model, KernelScale(0.2), 0.05)

    def test_contraction_tracker_raises_after_three_growths(self):
        tracker = _ContractionTracker()
        tracker.update(1.0)
        tracker.update(1.1)
        tracker.update(1.2)
        with pytest.raises(ContractionFailure, match="3 sweeps"):
            tracker.update(1.3)

    def test_contraction_tracker_resets_on_decrease(self):
        tracker = _ContractionTracker()
        for delta in (1.0, 1.1, 1.2, 0.9, 1.0, 1.1):
            tracker.update(delta)  # never three growths in a row
        assert tracker.growth_streak == 2
