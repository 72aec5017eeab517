"""Tests for the plan discretization and micro cross-validation layer."""

import json

import numpy as np
import pytest

from tclflex.errors import InvalidInputError, ValidationDegradedWarning
from tclflex.etp import DEFAULT_PARAMS, FleetSpec, sample_fleet, simulate_fleet
from tclflex.markov import build_grid
from tclflex.reachhold import ControlPlan
from tclflex.validation import (
    DiscretizedPlan,
    apply_plan_micro,
    burn_in,
    compare_traces,
    discretize_plan,
    save_validation_report,
)

from conftest import DEADBAND, T_AMB, T_SET, T_SET_NEW


def single_bin_plan(per_step: float, steps: int, n_states: int = 4, bin_idx: int = 1) -> ControlPlan:
    u = np.zeros((steps, n_states))
    u[:, bin_idx] = per_step
    return ControlPlan(u=u)


class TestDiscretizePlan:
    def test_carry_recursion_hand_values(self):
        # U = 0.4 per step: totals cycle 0.4, 0.8, 1.2, 0.6, 1.0 so the
        # floor pattern repeats 0,0,1,0,1 with carries 0.4,0.8,0.2,0.6,0.0
        plan = single_bin_plan(0.4 / 1000, steps=10)
        d = discretize_plan(plan, n_units=1000)
        assert d.counts[:, 1].tolist() == [0, 0, 1, 0, 1, 0, 0, 1, 0, 1]
        expected_carry = [0.0, 0.4, 0.8, 0.2, 0.6, 0.0, 0.4, 0.8, 0.2, 0.6, 0.0]
        assert d.carry[:, 1] == pytest.approx(expected_carry, abs=1e-9)
        assert d.counts[:, 0].sum() == 0 and d.counts[:, 2:].sum() == 0

    def test_integer_multiples_floor_exactly(self):
        u = np.zeros((5, 3))
        u[:, 0] = np.array([3, 0, 2, 1, 4]) / 200.0
        d = discretize_plan(ControlPlan(u=u), n_units=200)
        assert d.counts[:, 0].tolist() == [3, 0, 2, 1, 4]
        assert np.all(d.carry == pytest.approx(0.0, abs=1e-9))

    def test_cumulative_fidelity_within_one_unit_per_state(self):
        rng = np.random.default_rng(11)
        u = rng.uniform(0.0, 0.02, size=(30, 8))
        u *= 0.9 / u.sum()  # admissible total budget
        d = discretize_plan(ControlPlan(u=u), n_units=750)
        exact = np.cumsum(u * 750, axis=0)
        got = np.cumsum(d.counts, axis=0)
        assert np.all(np.abs(got - exact) <= 1.0 + 1e-9)
        assert d.counts.sum() <= 750

    def test_alpha_plan_expands_through_x0(self):
        x_0 = np.array([0.5, 0.25, 0.25, 0.0])
        plan = ControlPlan(alpha=np.array([0.2, 0.0, 0.8]))
        d = discretize_plan(plan, n_units=100, x_0=x_0)
        assert d.counts[0].tolist() == [10, 5, 5, 0]  # floor of 0.2 * x_0 * 100
        assert d.counts.sum() == pytest.approx(100, abs=len(x_0))

    def test_alpha_plan_without_x0_rejected(self):
        with pytest.raises(InvalidInputError, match="x_0"):
            discretize_plan(ControlPlan(alpha=np.array([0.5])), n_units=10)

    def test_over_budget_counts_rejected(self):
        u = np.full((4, 2), 0.25)  # total mass 2.0 > 1
        with pytest.raises(InvalidInputError, match="actuates"):
            discretize_plan(ControlPlan(u=u), n_units=40)

    def test_requested_total_matches_counts(self):
        plan = single_bin_plan(0.4 / 50, steps=10)
        d = discretize_plan(plan, n_units=50)
        assert d.total_requested == int(d.counts.sum())


@pytest.fixture(scope="module")
def settled_fleet():
    """A 200-unit homogeneous fleet burned in to its steady cycle."""
    fleet = sample_fleet(FleetSpec(n_units=200, seed=42, T_set=T_SET, T_amb=T_AMB))
    burn_in(fleet, T_AMB, DEADBAND, steps=240)
    return fleet


class TestApplyPlanMicro:
    def test_zero_plan_matches_unactuated_baseline(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        plan = DiscretizedPlan(
            counts=np.zeros((5, grid.n_states), dtype=int),
            carry=np.zeros((6, grid.n_states)),
            n_units=200,
        )
        ref = settled_fleet.copy()
        trace = simulate_fleet(ref, T_AMB, DEADBAND, 1.0, 12)
        run = apply_plan_micro(
            settled_fleet.copy(), plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=12, seed=3
        )
        assert run.power_kw == pytest.approx(trace.power_kw, abs=1e-12)
        assert run.total_selected == 0 and not run.shortfall_events

    def test_actuate_everyone_collapses_demand(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        fleet = settled_fleet.copy()
        state_idx = grid.temp_bin(fleet.T_a) + grid.n_bins * fleet.on.astype(int)
        counts = np.zeros((1, grid.n_states), dtype=int)
        for i in state_idx:
            counts[0, i] += 1
        plan = DiscretizedPlan(counts=counts, carry=np.zeros((2, grid.n_states)), n_units=200)
        run = apply_plan_micro(fleet, plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=20, seed=5)
        assert run.total_selected == 200
        # a 2 degC raise with a 1 degC band shuts every compressor within a step
        assert run.power_kw[2] == 0.0
        assert np.all(fleet.T_set == T_SET_NEW)

    def test_same_seed_reproduces_trace(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        counts = np.zeros((6, grid.n_states), dtype=int)
        counts[::2, grid.n_bins + 5] = 3  # pull from an on bin near the band
        counts[1::2, 6] = 2  # and an off bin inside it
        plan = DiscretizedPlan(counts=counts, carry=np.zeros((7, grid.n_states)), n_units=200)
        runs = [
            apply_plan_micro(
                settled_fleet.copy(), plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=30, seed=9
            )
            for _ in range(2)
        ]
        assert np.array_equal(runs[0].power_kw, runs[1].power_kw)
        assert np.array_equal(runs[0].actuated, runs[1].actuated)

    def test_empty_bin_shortfall_warns(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        counts = np.zeros((1, grid.n_states), dtype=int)
        counts[0, 0] = 10  # 18.0-18.3 degC: unoccupied at steady state
        plan = DiscretizedPlan(counts=counts, carry=np.zeros((2, grid.n_states)), n_units=200)
        with pytest.warns(ValidationDegradedWarning):
            run = apply_plan_micro(
                settled_fleet.copy(), plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=3, seed=1
            )
        assert run.degraded
        assert run.shortfall_events[0]["requested"] == 10
        assert run.shortfall_events[0]["selected"] == 0

    def test_units_never_actuated_twice(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        fleet = settled_fleet.copy()
        state_idx = grid.temp_bin(fleet.T_a) + grid.n_bins * fleet.on.astype(int)
        occupancy = np.bincount(state_idx, minlength=grid.n_states)
        # ask for the same busy bin twice; second round must draw fresh units
        busy = int(np.argmax(occupancy))
        take = int(occupancy[busy]) // 2
        counts = np.zeros((2, grid.n_states), dtype=int)
        counts[:, busy] = take
        plan = DiscretizedPlan(counts=counts, carry=np.zeros((3, grid.n_states)), n_units=200)
        run = apply_plan_micro(fleet, plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=4, seed=2)
        assert int(run.actuated.sum()) == run.total_selected

    def test_fleet_size_mismatch_rejected(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        plan = DiscretizedPlan(
            counts=np.zeros((1, grid.n_states), dtype=int),
            carry=np.zeros((2, grid.n_states)),
            n_units=999,
        )
        with pytest.raises(InvalidInputError, match="999"):
            apply_plan_micro(settled_fleet.copy(), plan, grid, T_SET_NEW, T_AMB, DEADBAND)

    def test_horizon_shorter_than_plan_rejected(self, settled_fleet):
        grid = build_grid(18.0, 24.0, 20)
        plan = DiscretizedPlan(
            counts=np.zeros((5, grid.n_states), dtype=int),
            carry=np.zeros((6, grid.n_states)),
            n_units=200,
        )
        with pytest.raises(InvalidInputError, match="horizon"):
            apply_plan_micro(
                settled_fleet.copy(), plan, grid, T_SET_NEW, T_AMB, DEADBAND, horizon=3
            )


class TestBurnIn:
    def test_baseline_near_duty_cycle_mean(self):
        fleet = sample_fleet(FleetSpec(n_units=400, seed=7, T_set=T_SET, T_amb=T_AMB))
        baseline = burn_in(fleet, T_AMB, DEADBAND, steps=360)
        duty = DEFAULT_PARAMS.duty_cycle(T_AMB, T_SET)
        assert baseline == pytest.approx(duty * fleet.P_on_total, rel=0.10)

    def test_requires_positive_steps(self):
        fleet = sample_fleet(FleetSpec(n_units=2, seed=0))
        with pytest.raises(InvalidInputError):
            burn_in(fleet, T_AMB, DEADBAND, steps=0)


class TestCompareTraces:
    def test_identical_traces(self):
        t = np.array([1000.0, 400.0, 300.0, 350.0])
        rep = compare_traces(
            t, t, p_on_total=3500.0, P_hold_kw=600.0, T_hold_steps=3, baseline_kw=1000.0
        )
        assert rep.rmse == 0.0 and rep.max_abs_dev == 0.0
        assert rep.hold_satisfied_fraction == 1.0

    def test_constant_offset_sets_max_dev(self):
        a = np.linspace(900.0, 1100.0, 7)
        rep = compare_traces(a, a - 70.0, p_on_total=3500.0)
        assert rep.max_abs_dev == pytest.approx(70.0 / 3500.0)
        assert rep.rmse == pytest.approx(70.0 / 3500.0)
        assert rep.hold_satisfied_fraction is None

    def test_hold_fraction_counts_tolerant_steps(self):
        micro = np.array([1000.0, 500.0, 520.0, 700.0, 500.0])
        rep = compare_traces(
            np.zeros(5), micro, p_on_total=1000.0,
            P_hold_kw=450.0, T_hold_steps=4, baseline_kw=1000.0, hold_tol_kw=50.0,
        )
        # reductions 500, 480, 300, 500 against the 400 kW floor
        assert rep.hold_satisfied_fraction == pytest.approx(0.75)

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            compare_traces(np.zeros(4), np.zeros(5), p_on_total=100.0)

    def test_hold_args_must_travel_together(self):
        with pytest.raises(InvalidInputError):
            compare_traces(np.zeros(4), np.zeros(4), p_on_total=100.0, P_hold_kw=10.0)


class TestSaveReport:
    def test_json_and_csv_round_trip(self, tmp_path):
        markov = np.array([100.0, 50.25, 30.5])
        micro = np.array([100.0, 48.0, 33.125])
        rep = compare_traces(markov, micro, p_on_total=350.0)
        jp, cp = tmp_path / "report.json", tmp_path / "paired.csv"
        save_validation_report(rep, markov, micro, jp, cp)
        data = json.loads(jp.read_text())
        assert set(data) == {
            "rmse", "max_abs_dev", "hold_satisfied_fraction",
            "p_on_total_kw", "shortfall_events", "degraded",
        }
        lines = cp.read_text().splitlines()
        assert lines[0] == "step,markov_kW,micro_kW"
        assert lines[2].split(",") == ["1", repr(50.25), repr(48.0)]
        save_validation_report(rep, markov, micro, tmp_path / "r2.json", tmp_path / "p2.csv")
        assert (tmp_path / "p2.csv").read_bytes() == cp.read_bytes()
