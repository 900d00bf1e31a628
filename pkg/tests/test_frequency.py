"""
Frequency Process Tests

SDE coefficients, jump maps, the limit SDE, the culling scheme and the
two evaluations of the generator on monomials.
"""

import itertools
import math

import numpy as np
import pytest

from params_factory import orthant, random_branching
from src.core.coalescent import enumerate_block_transitions
from src.core.frequency import (
    SeqSampleConfig,
    apply_jump,
    build_freq_params,
    generator_on_monomial,
    limit_sde_ensemble,
    raw_generator_on_monomial,
    sequential_sampling,
    sequential_sampling_ensemble,
    simulate_limit_sde,
)
from src.core.transform import MassLevel
from src.models.errors import PreconditionError, StructuralError
from src.models.params import BranchingParams


def _no_jumps(B, c):
    d = len(c)
    return BranchingParams(B=B, c=c, mu=tuple(orthant(dim=d) for _ in range(d)))


def _monomial(r, m):
    return math.prod(r[j] ** m[j] for j in range(len(m)))


class TestBuildFreqParams:
    """Coefficients at a fixed mass level."""

    def test_no_jumps(self):
        fp = build_freq_params(_no_jumps([[0.0, 2.0], [1.0, 0.0]], [0.5, 1.0]), MassLevel([1.0, 4.0]))
        assert fp.drift_coeffs[0, 1] == pytest.approx(8.0)
        assert fp.drift_coeffs[1, 0] == pytest.approx(0.25)
        assert fp.diff_coeffs.tolist() == pytest.approx([1.0, 0.5])
        assert all(len(pts) == 0 for pts, _ in fp.jump_atoms)

    def test_single_type_has_no_off_diagonal_drift(self):
        p = BranchingParams(B=[[-1.0]], c=[1.0], mu=(orthant(((1.0,), 2.0)),))
        fp = build_freq_params(p, MassLevel([2.0]))
        assert fp.drift_coeffs.tolist() == [[0.0]]
        assert fp.diff_coeffs[0] == pytest.approx(1.0)
        assert fp.jump_atoms[0][0][0, 0] == pytest.approx(1.0 / 3.0)

    def test_jump_atom_enters_drift(self):
        p = BranchingParams(
            B=[[0.0, 0.0], [0.0, 0.0]],
            c=[0.0, 0.0],
            mu=(orthant(dim=2), orthant(((1.0, 1.0), 1.0))),
        )
        fp = build_freq_params(p, MassLevel([1.0, 1.0]))
        assert fp.jump_atoms[1][0].tolist() == [[0.5, 0.5]]
        assert fp.drift_coeffs[0, 1] == pytest.approx(0.5)
        assert fp.drift_coeffs[1, 0] == pytest.approx(0.0)

    def test_dimension_mismatch(self, two_type_branching):
        with pytest.raises(StructuralError):
            build_freq_params(two_type_branching, MassLevel([1.0]))


class TestJumps:
    def test_family_one(self):
        assert apply_jump([0.4, 0.8], [0.5, 0.25], 1).tolist() == pytest.approx([0.7, 0.85])

    def test_family_two(self):
        assert apply_jump([0.4, 0.8], [0.5, 0.25], 2).tolist() == pytest.approx([0.2, 0.6])

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            apply_jump([0.5], [0.5], 3)


class TestLimitSde:
    """Euler scheme for the frequency SDE."""

    @pytest.fixture
    def jumpy(self):
        return BranchingParams(B=[[0.0]], c=[1.0], mu=(orthant(((1.0,), 0.5)),))

    def test_zero_is_absorbing_without_migration(self, jumpy):
        traj = simulate_limit_sde(build_freq_params(jumpy, MassLevel([1.0])), [0.0], 1.0, 0.01, seed=3)
        assert all(state[0] == 0.0 for state in traj.states)

    def test_one_is_absorbing_without_migration(self, jumpy):
        traj = simulate_limit_sde(build_freq_params(jumpy, MassLevel([1.0])), [1.0], 1.0, 0.01, seed=3)
        assert all(state[0] == 1.0 for state in traj.states)

    def test_trajectory_names_its_params(self, jumpy):
        traj = simulate_limit_sde(build_freq_params(jumpy, MassLevel([1.0])), [0.5], 0.1, 0.01, seed=3)
        assert traj.meta["params"] == jumpy.digest()
        assert traj.meta["z"] == [1.0]

    def test_stays_in_unit_cube(self, two_type_branching):
        fp = build_freq_params(two_type_branching, MassLevel([1.0, 2.0]))
        terminal = limit_sde_ensemble(fp, [0.3, 0.7], 1.0, 0.01, 2000, seed=8)
        assert np.all((terminal >= 0.0) & (terminal <= 1.0))

    def test_rejects_start_outside_cube(self, two_type_branching):
        fp = build_freq_params(two_type_branching, MassLevel([1.0, 2.0]))
        with pytest.raises(PreconditionError):
            simulate_limit_sde(fp, [0.3, 1.2], 1.0, 0.01, seed=0)

    def test_deterministic_migration_follows_ode(self):
        # d/dt r_0 = 1 * (r_1 - r_0), d/dt r_1 = 1 * (r_0 - r_1): the mean is preserved, the gap decays like exp(-2t)
        fp = build_freq_params(_no_jumps([[0.0, 1.0], [1.0, 0.0]], [0.0, 0.0]), MassLevel([1.0, 1.0]))
        traj = simulate_limit_sde(fp, [0.2, 0.8], 1.0, 1e-4, seed=0)
        gap = 0.6 * math.exp(-2.0)
        assert traj.final_state.tolist() == pytest.approx([0.5 - gap / 2, 0.5 + gap / 2], rel=1e-3)


class TestSequentialSampling:
    """Culling scheme built on the pair process."""

    def test_config_rejects_zero_intensity(self):
        with pytest.raises(PreconditionError):
            SeqSampleConfig(n=0, eps=0.1, L=10.0)

    def test_config_rejects_fractional_intensity(self):
        with pytest.raises(PreconditionError):
            SeqSampleConfig(n=1.5, eps=0.1, L=10.0)

    def test_config_rejects_bad_inner_step(self):
        with pytest.raises(PreconditionError):
            SeqSampleConfig(n=4, eps=0.1, L=10.0, inner_dt=0.0)

    def test_inner_step_capped_by_intensity(self):
        assert SeqSampleConfig(n=100, eps=0.1, L=10.0, inner_dt=1e-2).effective_inner_dt == pytest.approx(1e-3)
        assert SeqSampleConfig(n=4, eps=0.1, L=10.0, inner_dt=1e-3).effective_inner_dt == pytest.approx(1e-3)

    def test_guard_rails_against_z(self, two_type_branching):
        cfg = SeqSampleConfig(n=8, eps=1.5, L=10.0)
        with pytest.raises(PreconditionError):
            sequential_sampling(two_type_branching, MassLevel([1.0, 2.0]), [0.5, 0.5], cfg, 1.0, seed=0)

    def test_fixed_point_gives_constant_skeleton(self):
        p = _no_jumps([[-1.0, 1.0], [1.0, -1.0]], [0.0, 0.0])
        cfg = SeqSampleConfig(n=16, eps=0.1, L=10.0, inner_dt=1e-2)
        traj = sequential_sampling(p, MassLevel([1.0, 1.0]), [0.3, 0.3], cfg, 1.0, seed=12)
        assert traj.meta["skeleton_steps"] == len(traj) - 1
        assert len(traj) > 1
        for state in traj.states:
            assert state.tolist() == pytest.approx([0.3, 0.3], abs=1e-12)

    def test_skeleton_times_increase_within_horizon(self, two_type_branching):
        cfg = SeqSampleConfig(n=8, eps=0.05, L=20.0)
        traj = sequential_sampling(two_type_branching, MassLevel([1.0, 2.0]), [0.3, 0.7], cfg, 2.0, seed=5)
        assert traj.times[-1] <= 2.0
        assert all(np.all((s >= 0) & (s <= 1)) for s in traj.states)

    def test_ensemble_shape_and_determinism(self, two_type_branching):
        cfg = SeqSampleConfig(n=8, eps=0.05, L=20.0)
        z = MassLevel([1.0, 2.0])
        a = sequential_sampling_ensemble(two_type_branching, z, [0.3, 0.7], cfg, 0.3, 64, seed=2, chunk_size=16)
        b = sequential_sampling_ensemble(two_type_branching, z, [0.3, 0.7], cfg, 0.3, 64, seed=2, chunk_size=16)
        assert a.shape == (64, 2)
        assert np.array_equal(a, b)

    def test_culled_migration_converges_to_ode(self):
        # c = 0, no jumps, Z stays at (1, 1): after N ~ Poisson(n t) skeleton steps the gap
        # r_1 - r_0 is 0.6 exp(-2 N / n), so its mean is 0.6 exp(n t (exp(-2 / n) - 1)) = ODE + O(1/n)
        p = _no_jumps([[-1.0, 1.0], [1.0, -1.0]], [0.0, 0.0])
        t, reps = 0.3, 4000
        ode = 0.6 * math.exp(-2.0 * t)
        errors = {}
        for n in (8, 32, 128):
            cfg = SeqSampleConfig(n=n, eps=0.1, L=10.0, inner_dt=1e-4)
            r = sequential_sampling_ensemble(p, MassLevel([1.0, 1.0]), [0.2, 0.8], cfg, t, reps, seed=n)
            gap = r[:, 1] - r[:, 0]
            se = gap.std(ddof=1) / math.sqrt(reps)
            culled = 0.6 * math.exp(n * t * (math.exp(-2.0 / n) - 1.0))
            assert gap.mean() == pytest.approx(culled, abs=4 * se + 1e-3)
            assert abs(gap.mean() - ode) <= 0.25 / n + 4 * se
            errors[n] = abs(gap.mean() - ode)
        assert errors[8] > errors[128]

    def test_culled_process_matches_limit_sde(self, migrating_pair):
        z = MassLevel([1.0, 2.0])
        t, reps = 0.3, 10000
        cfg = SeqSampleConfig(n=128, eps=0.5, L=5.0)
        culled = sequential_sampling_ensemble(migrating_pair, z, [0.3, 0.7], cfg, t, reps, seed=41)
        limit = limit_sde_ensemble(build_freq_params(migrating_pair, z), [0.3, 0.7], t, 1e-3, reps, seed=42)
        se = np.sqrt(culled.var(axis=0, ddof=1) / reps + limit.var(axis=0, ddof=1) / reps)
        assert np.all(np.abs(culled.mean(axis=0) - limit.mean(axis=0)) <= 4 * se)


class TestGeneratorOnMonomials:
    """A^(z) r^n evaluated two ways and against the block-counting rates."""

    def test_martingale_coordinate(self):
        fp = build_freq_params(_no_jumps([[0.0]], [1.0]), MassLevel([1.0]))
        assert generator_on_monomial(fp, (1,), [0.3]) == 0.0

    def test_single_type_diffusion(self):
        fp = build_freq_params(_no_jumps([[0.0]], [1.0]), MassLevel([2.0]))
        for r in (0.1, 0.5, 0.9):
            assert generator_on_monomial(fp, (2,), [r]) == pytest.approx(r - r * r)

    def test_matches_raw_generator(self):
        rng = np.random.default_rng(31)
        for d in (1, 2, 3):
            for _ in range(5):
                p = random_branching(rng, d)
                fp = build_freq_params(p, MassLevel(rng.uniform(0.2, 5.0, size=d)))
                for n in itertools.product(range(3), repeat=d):
                    r = rng.uniform(0.0, 1.0, size=d)
                    expected = raw_generator_on_monomial(fp, n, r)
                    assert generator_on_monomial(fp, n, r) == pytest.approx(expected, rel=1e-10, abs=1e-10)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_matches_block_counting_rates(self, d):
        rng = np.random.default_rng(47 + d)
        for _ in range(10):
            p = random_branching(rng, d)
            z = MassLevel(rng.uniform(0.1, 10.0, size=d))
            fp = build_freq_params(p, z)
            for n in itertools.product(range(7), repeat=d):
                if sum(n) == 0 or sum(n) > 6:
                    continue
                transitions = enumerate_block_transitions(n, p, z)
                for r in rng.uniform(0.0, 1.0, size=(3, d)):
                    base = _monomial(r, n)
                    dual = math.fsum(tr.rate * (_monomial(r, tr.target) - base) for tr in transitions)
                    assert generator_on_monomial(fp, n, r) == pytest.approx(dual, rel=1e-10, abs=1e-10)
