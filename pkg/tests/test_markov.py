"""Tests for the bin model: grids, Monte-Carlo estimation, stationary
distributions, population stepping, and serialization."""

import numpy as np
import pytest

from tclflex.errors import (
    ConstraintViolationError,
    InvalidConfigurationError,
    InvalidInputError,
    NumericalFailureError,
)
from tclflex.etp import DEFAULT_PARAMS, FleetSpec, sample_fleet, simulate_fleet
from tclflex.markov import (
    BinGrid,
    PopulationState,
    TransitionMatrix,
    aggregate_power,
    build_grid,
    estimate_transition_matrix,
    load_matrix,
    output_vector,
    save_matrix,
    stationary_distribution,
    step_population,
    x_out_vector,
)

from conftest import DEADBAND, P_ON_TOTAL, T_AMB, T_SET


class TestBinGrid:
    def test_build_grid_example(self):
        grid = build_grid(19.0, 23.0, 8)
        assert grid.delta_tau == pytest.approx(0.5)
        assert grid.n_states == 16
        assert grid.edges[0] == 19.0 and grid.edges[-1] == 23.0

    def test_interior_points_round_trip(self):
        grid = build_grid(19.0, 23.0, 8)
        rng = np.random.default_rng(42)
        for _ in range(1000):
            b = rng.integers(0, 8)
            eps = grid.delta_tau * rng.uniform(0.01, 0.99)
            T = grid.edges[b] + eps
            assert grid.temp_bin(T) == b
            assert grid.state_index(T, False) == b
            assert grid.state_index(T, True) == b + 8

    def test_out_of_range_clips_to_boundary_bins(self):
        grid = build_grid(19.0, 23.0, 8)
        assert grid.temp_bin(10.0) == 0
        assert grid.temp_bin(40.0) == 7
        assert grid.temp_bin(23.0) == 7  # top edge belongs to the last bin

    def test_rejects_bad_grid(self):
        with pytest.raises(InvalidInputError):
            build_grid(23.0, 19.0, 8)
        with pytest.raises(InvalidInputError):
            build_grid(19.0, 23.0, 0)


class TestEstimateTransitionMatrix:
    def test_columns_sum_to_one(self, tm_nominal):
        sums = tm_nominal.P.sum(axis=0)
        assert np.all(np.abs(sums - 1.0) <= 1e-9)
        assert np.all(tm_nominal.P >= 0.0)

    def test_deterministic_in_seed(self, grid40):
        a = estimate_transition_matrix(DEFAULT_PARAMS, grid40, T_SET, DEADBAND, T_AMB, n_samples=1000, seed=5)
        b = estimate_transition_matrix(DEFAULT_PARAMS, grid40, T_SET, DEADBAND, T_AMB, n_samples=1000, seed=5)
        assert np.array_equal(a.P, b.P)

    def test_on_units_inside_band_drift_cooler(self, grid40, tm_nominal):
        # pick the on bin at the band center; cooling moves mass to cooler bins
        N = grid40.n_bins
        b = int(grid40.temp_bin(T_SET))
        col = tm_nominal.P[:, N + b]
        cooler = col[N : N + b].sum()  # stays on, cooler bins
        warmer = col[N + b + 1 :].sum()
        assert cooler > warmer

    def test_off_units_inside_band_drift_warmer(self, grid40, tm_nominal):
        b = int(grid40.temp_bin(T_SET))
        col = tm_nominal.P[:, b]
        warmer = col[b + 1 : grid40.n_bins].sum()
        cooler = col[:b].sum()
        assert warmer > cooler

    def test_monte_carlo_convergence_on_doubling(self, grid40):
        # Standardized entry differences between an n and a 2n estimate.
        # Individual 3-sigma exceedances are expected at this matrix size,
        # so the bound is: none beyond 5 sigma, at least 99% inside 3.
        n = 4000
        a = estimate_transition_matrix(DEFAULT_PARAMS, grid40, T_SET, DEADBAND, T_AMB, n_samples=n, seed=31)
        b = estimate_transition_matrix(DEFAULT_PARAMS, grid40, T_SET, DEADBAND, T_AMB, n_samples=2 * n, seed=32)
        pooled = (n * a.P + 2 * n * b.P) / (3 * n)
        var = pooled * (1.0 - pooled) * (1.0 / n + 1.0 / (2 * n))
        sigma = np.sqrt(var) + 1e-12
        z = np.abs(a.P - b.P) / sigma
        assert z.max() < 5.0
        assert (z < 3.0).mean() >= 0.99

    def test_band_must_be_inside_grid(self):
        grid = build_grid(19.8, 23.0, 8)
        with pytest.raises(InvalidConfigurationError):
            estimate_transition_matrix(DEFAULT_PARAMS, grid, T_SET, DEADBAND, T_AMB, n_samples=1000)

    def test_sample_floor_enforced(self, grid40):
        with pytest.raises(InvalidInputError):
            estimate_transition_matrix(DEFAULT_PARAMS, grid40, T_SET, DEADBAND, T_AMB, n_samples=999)


class TestStationaryDistribution:
    def test_two_state_closed_form(self):
        # birth-death chain with known fixed point (5/6, 1/6)
        grid = BinGrid(T_min=19.5, T_max=20.5, n_bins=1)
        P = np.array([[0.9, 0.5], [0.1, 0.5]])
        tm = TransitionMatrix(P=P, grid=grid, dt_minutes=1.0, T_set=20.0, T_amb=32.0, deadband=1.0)
        result = stationary_distribution(tm)
        assert result.x == pytest.approx([5.0 / 6.0, 1.0 / 6.0], abs=1e-9)
        assert result.unique
        assert result.residual <= 1e-10

    def test_default_regime_converges(self, tm_nominal, x0_nominal):
        x = x0_nominal.x
        assert x0_nominal.residual <= 1e-10
        assert np.all(x >= 0.0)
        assert x.sum() == pytest.approx(1.0, abs=1e-9)
        # mass concentrates on the deadband
        grid = tm_nominal.grid
        centers = np.concatenate([grid.centers, grid.centers])
        inside = (centers >= T_SET - 0.6 * DEADBAND) & (centers <= T_SET + 0.6 * DEADBAND)
        assert x[inside].sum() > 0.95

    def test_nominal_power_matches_micro_long_run(self, tm_nominal, x0_nominal, c_out):
        p_nom = float(c_out.c @ x0_nominal.x)
        spec = FleetSpec(n_units=800, heterogeneity=0.0, seed=71)
        fleet = sample_fleet(spec)
        trace = simulate_fleet(fleet, spec.T_amb, spec.deadband, 1.0, 24 * 60, record_traces=False)
        micro_mean = trace.power_kw[120:].mean() * P_ON_TOTAL / fleet.P_on_total
        assert abs(p_nom - micro_mean) <= 0.05 * micro_mean

    def test_identity_matrix_flagged_non_unique(self):
        grid = BinGrid(T_min=19.5, T_max=20.5, n_bins=1)
        tm = TransitionMatrix(P=np.eye(2), grid=grid, dt_minutes=1.0, T_set=20.0, T_amb=32.0, deadband=1.0)
        result = stationary_distribution(tm)
        assert not result.unique
        assert result.residual <= 1e-10

    def test_nonconvergent_chain_raises(self):
        # pure two-cycle: power iteration cannot settle without the restart;
        # with it, the averaged iterate is stationary, so build a matrix whose
        # fixed point exists but make tol unreachable instead
        grid = BinGrid(T_min=19.5, T_max=20.5, n_bins=1)
        P = np.array([[0.0, 1.0], [1.0, 0.0]])
        tm = TransitionMatrix(P=P, grid=grid, dt_minutes=1.0, T_set=20.0, T_amb=32.0, deadband=1.0)
        result = stationary_distribution(tm)  # restart handles periodicity
        assert result.x == pytest.approx([0.5, 0.5], abs=1e-9)
        slow = TransitionMatrix(
            P=np.array([[0.9, 0.5], [0.1, 0.5]]),
            grid=grid, dt_minutes=1.0, T_set=20.0, T_amb=32.0, deadband=1.0,
        )
        with pytest.raises(NumericalFailureError, match="residual"):
            stationary_distribution(slow, tol=1e-12, max_iter=2)


class TestPopulationStepping:
    def test_mass_conserved_and_nonnegative(self, tm_nominal, tm_actuated, x0_nominal):
        x0 = x0_nominal.x
        state = PopulationState(x=x0, x_a=np.zeros_like(x0))
        rng = np.random.default_rng(3)
        for _ in range(20):
            u = state.x * rng.uniform(0.0, 0.3)
            state = step_population(state, u, tm_nominal, tm_actuated)
            total = state.x.sum() + state.x_a.sum()
            assert total == pytest.approx(1.0, abs=1e-9)
            assert np.all(state.x >= -1e-12)
            assert np.all(state.x_a >= -1e-12)

    def test_zero_control_is_pure_mixing(self, tm_nominal, tm_actuated, x0_nominal):
        x0 = x0_nominal.x
        state = PopulationState(x=x0, x_a=np.zeros_like(x0))
        nxt = step_population(state, np.zeros_like(x0), tm_nominal, tm_actuated)
        assert np.allclose(nxt.x, tm_nominal.P @ x0, atol=1e-15)
        assert np.all(nxt.x_a == 0.0)

    def test_control_bounds_enforced(self, tm_nominal, tm_actuated, x0_nominal):
        x0 = x0_nominal.x
        state = PopulationState(x=x0, x_a=np.zeros_like(x0))
        u = np.zeros_like(x0)
        u[5] = -0.01
        with pytest.raises(ConstraintViolationError, match=r"u\[5\]"):
            step_population(state, u, tm_nominal, tm_actuated)
        u = x0 + 0.01
        with pytest.raises(ConstraintViolationError):
            step_population(state, u, tm_nominal, tm_actuated)

    def test_state_validation(self):
        with pytest.raises(InvalidInputError):
            PopulationState(x=np.array([0.6, 0.6]), x_a=np.array([0.0, 0.0]))
        with pytest.raises(InvalidInputError):
            PopulationState(x=np.array([-0.1, 1.1]), x_a=np.array([0.0, 0.0]))

    def test_aggregate_power_reads_on_block(self, grid40, c_out):
        n = grid40.n_bins
        x = np.zeros(grid40.n_states)
        x[: n] = 0.6 / n
        x[n :] = 0.4 / n
        state = PopulationState(x=x, x_a=np.zeros_like(x))
        assert aggregate_power(state, c_out) == pytest.approx(0.4 * P_ON_TOTAL, rel=1e-12)


class TestRemarkOneZero:
    def test_actuated_column_empties_on_block(self, tm_actuated, x0_nominal, c_out):
        # a setpoint raise of 2 degC with a 1 degC band switches every
        # stationary on unit off within one step
        val = float(c_out.c @ (tm_actuated.P @ x0_nominal.x))
        assert abs(val) <= 1e-12 * P_ON_TOTAL


class TestXOutVector:
    def test_edge_coincides_uses_colder_bin(self):
        grid = build_grid(18.0, 24.0, 12)  # delta_tau = 0.5, edges on halves
        x = x_out_vector(grid, T_set=20.0, deadband=1.0)  # edge 19.5 == bin edge
        s = int(np.argmax(x))
        b = s - grid.n_bins
        assert grid.edges[b + 1] == pytest.approx(19.5)
        assert x.sum() == 1.0 and x[s] == 1.0

    def test_interior_edge_uses_containing_bin(self, grid40):
        x = x_out_vector(grid40, T_set=20.05, deadband=1.0)  # edge at 19.55
        b = int(np.argmax(x)) - grid40.n_bins
        assert grid40.edges[b] < 19.55 < grid40.edges[b + 1]

    def test_mass_is_in_on_block(self, grid40):
        x = x_out_vector(grid40, T_set=20.0, deadband=1.0)
        assert x[: grid40.n_bins].sum() == 0.0
        assert x[grid40.n_bins :].sum() == 1.0


class TestSerialization:
    def test_round_trip_bit_exact(self, tm_nominal, tmp_path):
        path = tmp_path / "matrix.csv"
        save_matrix(tm_nominal, path)
        loaded = load_matrix(path)
        assert np.array_equal(loaded.P, tm_nominal.P)
        assert loaded.dt_minutes == tm_nominal.dt_minutes
        assert loaded.T_set == tm_nominal.T_set
        assert loaded.T_amb == tm_nominal.T_amb
        assert loaded.deadband == tm_nominal.deadband
        assert loaded.grid == tm_nominal.grid

    def test_loader_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "bogus.csv"
        path.write_text("step,unit\n0,0\n")
        with pytest.raises(InvalidInputError):
            load_matrix(path)

    def test_loader_validates_stochasticity(self, tm_nominal, tmp_path):
        path = tmp_path / "matrix.csv"
        save_matrix(tm_nominal, path)
        text = path.read_text().splitlines()
        text[8] = ",".join(["0.5"] * tm_nominal.grid.n_states)  # corrupt a row
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(NumericalFailureError):
            load_matrix(path)
