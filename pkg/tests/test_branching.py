"""
CSBP Simulation Tests

First-moment matrix, the splitting scheme and the paired (R, Z) process.
"""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from params_factory import orthant
from src.core.branching import (
    csbp_ensemble,
    frequency_of,
    mean_matrix,
    simulate_csbp,
    simulate_pair_rz,
    time_grid,
)
from src.models.errors import InvalidParamsError, PreconditionError, StructuralError
from src.models.params import BranchingParams


def _pure_drift(b):
    return BranchingParams(B=[[b]], c=[0.0], mu=(orthant(dim=1),))


class TestMeanMatrix:
    """M with E[X(t)] = exp(tM) x0."""

    def test_no_jumps_gives_B(self, two_type_branching):
        p = BranchingParams(B=two_type_branching.B, c=[1.0, 1.0], mu=(orthant(dim=2), orthant(dim=2)))
        assert np.array_equal(mean_matrix(p), p.B)

    def test_small_jumps_fully_compensated(self):
        p = BranchingParams(B=[[0.0]], c=[0.0], mu=(orthant(((0.5,), 2.0)),))
        assert mean_matrix(p)[0, 0] == pytest.approx(0.0)

    def test_truncation_gap(self):
        p = BranchingParams(B=[[0.0]], c=[0.0], mu=(orthant(((2.0,), 1.0)),))
        assert mean_matrix(p)[0, 0] == pytest.approx(1.0)

    def test_jump_into_other_colony(self, two_type_branching):
        M = mean_matrix(two_type_branching)
        assert M[0, 0] == pytest.approx(-0.5 + 0.8 * 1.0 - 0.8 * 1.0)
        assert M[1, 0] == pytest.approx(0.3 + 0.8 * 0.5)
        assert M[0, 1] == pytest.approx(0.4)


class TestTimeGrid:
    def test_grid_ends_at_horizon(self):
        grid = time_grid(1.0, 0.3)
        assert grid[0] == 0.0
        assert grid[-1] == 1.0
        assert len(grid) == 5

    def test_zero_horizon(self):
        assert time_grid(0.0, 0.1) == [0.0]

    def test_rejects_bad_step(self):
        with pytest.raises(PreconditionError):
            time_grid(1.0, 0.0)


class TestSimulateCsbp:
    """Single paths of the splitting scheme."""

    def test_zero_is_absorbing(self, two_type_branching):
        traj = simulate_csbp(two_type_branching, [0.0, 0.0], 1.0, 0.01, seed=1)
        assert traj.meta["absorbed"] is True
        assert len(traj) == 1
        assert traj.state_at(0.7).tolist() == [0.0, 0.0]

    def test_pure_drift_matches_exponential(self):
        traj = simulate_csbp(_pure_drift(-1.0), [2.0], 1.0, 1e-4, seed=0)
        exact = 2.0 * math.exp(-1.0)
        assert abs(traj.final_state[0] - exact) / exact < 1e-3

    def test_linear_flow_without_noise(self):
        p = BranchingParams(B=[[-1.0, 0.5], [0.5, -1.0]], c=[0.0, 0.0], mu=(orthant(dim=2), orthant(dim=2)))
        traj = simulate_csbp(p, [1.0, 2.0], 1.0, 1e-4, seed=3)
        assert np.allclose(traj.final_state, expm(p.B) @ np.array([1.0, 2.0]), rtol=1e-3)

    def test_states_stay_non_negative(self, two_type_branching):
        traj = simulate_csbp(two_type_branching, [0.2, 0.1], 2.0, 0.01, seed=5)
        assert all(np.all(state >= 0) for state in traj.states)

    def test_same_seed_same_path(self, two_type_branching):
        a = simulate_csbp(two_type_branching, [1.0, 1.0], 0.5, 0.01, seed=17)
        b = simulate_csbp(two_type_branching, [1.0, 1.0], 0.5, 0.01, seed=17)
        assert all(np.array_equal(x, y) for x, y in zip(a.states, b.states))

    def test_explosion_flag(self):
        traj = simulate_csbp(_pure_drift(50.0), [1.0], 1.0, 0.01, seed=0, explosion_cap=1e3)
        assert traj.meta["exploded"] is True
        assert traj.meta["explosion_time"] < 1.0

    def test_rejects_negative_start(self, two_type_branching):
        with pytest.raises(PreconditionError):
            simulate_csbp(two_type_branching, [1.0, -0.1], 1.0, 0.01, seed=0)

    def test_rejects_wrong_length(self, two_type_branching):
        with pytest.raises(StructuralError):
            simulate_csbp(two_type_branching, [1.0], 1.0, 0.01, seed=0)

    def test_rejects_invalid_params(self):
        p = BranchingParams(B=[[0.0, -1.0], [0.0, 0.0]], c=[0.0, 0.0], mu=(orthant(dim=2), orthant(dim=2)))
        with pytest.raises(InvalidParamsError):
            simulate_csbp(p, [1.0, 1.0], 1.0, 0.01, seed=0)


class TestCsbpEnsemble:
    """Ensemble means against the first-moment matrix."""

    def test_mean_matches_matrix_exponential(self, two_type_branching):
        reps, T = 20000, 0.5
        x0 = np.array([2.0, 1.5])
        terminal = csbp_ensemble(two_type_branching, x0, T, 5e-3, reps, seed=2024)
        assert terminal.shape == (reps, 2)
        expected = expm(T * mean_matrix(two_type_branching)) @ x0
        se = terminal.std(axis=0, ddof=1) / math.sqrt(reps)
        assert np.all(np.abs(terminal.mean(axis=0) - expected) < 4 * se)

    def test_branching_property_in_the_mean(self, two_type_branching):
        reps, T = 10000, 0.3
        u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        both = csbp_ensemble(two_type_branching, u + v, T, 1e-2, reps, seed=1)
        left = csbp_ensemble(two_type_branching, u, T, 1e-2, reps, seed=2)
        right = csbp_ensemble(two_type_branching, v, T, 1e-2, reps, seed=3)
        diff = both.mean(axis=0) - left.mean(axis=0) - right.mean(axis=0)
        se = np.sqrt((both.var(axis=0, ddof=1) + left.var(axis=0, ddof=1) + right.var(axis=0, ddof=1)) / reps)
        assert np.all(np.abs(diff) < 4 * se)

    def test_deterministic_for_fixed_seed(self, two_type_branching):
        a = csbp_ensemble(two_type_branching, [1.0, 1.0], 0.2, 0.01, 300, seed=9, chunk_size=128)
        b = csbp_ensemble(two_type_branching, [1.0, 1.0], 0.2, 0.01, 300, seed=9, chunk_size=128)
        assert np.array_equal(a, b)

    def test_exploded_rows_are_infinite(self):
        terminal = csbp_ensemble(_pure_drift(50.0), [1.0], 1.0, 0.01, 4, seed=0, explosion_cap=1e3)
        assert np.all(np.isinf(terminal))


class TestPairProcess:
    """Frequency / total-mass decomposition of two independent copies."""

    def test_frequency_of_keeps_last_value_at_zero_mass(self):
        r, z = frequency_of(np.array([1.0, 0.0]), np.array([3.0, 0.0]), np.array([0.5, 0.7]))
        assert r.tolist() == [0.25, 0.7]
        assert z.tolist() == [4.0, 0.0]

    def test_full_frequency_stays_one(self, two_type_branching):
        traj = simulate_pair_rz(two_type_branching, [1.0, 1.0], [1.0, 1.0], 1.0, 0.01, seed=4, eps=0.01, L=100.0)
        assert all(np.all(state.r == 1.0) for state in traj.states)

    def test_frequencies_in_unit_cube(self, two_type_branching):
        traj = simulate_pair_rz(two_type_branching, [0.3, 0.6], [1.0, 2.0], 1.0, 0.01, seed=6, eps=0.01, L=100.0)
        assert all(np.all((state.r >= 0) & (state.r <= 1)) for state in traj.states)

    def test_stop_flag_when_mass_leaves_window(self):
        traj = simulate_pair_rz(_pure_drift(5.0), [0.5], [1.0], 2.0, 0.01, seed=0, eps=0.5, L=2.0)
        assert traj.meta["stopped"] is True
        assert traj.final_state.stopped is True
        assert traj.final_state.z[0] >= 2.0
        assert not any(state.stopped for state in traj.states[:-1])

    def test_symmetric_start_has_mean_one_half(self):
        p = BranchingParams(B=[[-0.2]], c=[0.5], mu=(orthant(dim=1),))
        finals = np.array([
            simulate_pair_rz(p, [0.5], [2.0], 0.5, 0.01, seed=s, eps=0.01, L=50.0).final_state.r[0]
            for s in range(1500)
        ])
        se = finals.std(ddof=1) / math.sqrt(finals.size)
        assert abs(finals.mean() - 0.5) < 4 * se

    def test_guard_rails_checked(self, two_type_branching):
        with pytest.raises(PreconditionError):
            simulate_pair_rz(two_type_branching, [0.5, 0.5], [1.0, 1.0], 1.0, 0.01, seed=0, eps=1.0, L=10.0)
        with pytest.raises(PreconditionError):
            simulate_pair_rz(two_type_branching, [1.5, 0.5], [1.0, 1.0], 1.0, 0.01, seed=0, eps=0.1, L=10.0)
