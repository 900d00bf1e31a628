"""
Transform Tests

T_z, its inverse, measure push-forward / pull-back and the parameter map
H_z between the branching and coalescent parameter spaces.
"""

import numpy as np
import pytest

from params_factory import cube, orthant, random_branching, random_coalescent
from src.core.transform import (
    DiagonalAnchor,
    MassLevel,
    h_z,
    h_z_inverse,
    pullback,
    pushforward,
    t_z,
    t_z_inverse,
)
from src.models.errors import DomainError, InvalidParamsError
from src.models.params import (
    AtomicMeasure,
    BranchingParams,
    CoalescentParams,
    coal_topology_distance,
    default_probes,
    integrate,
    validate_branching,
)

# Three dimensions each, so just over 1000 trials per direction
ROUND_TRIPS_PER_DIM = 334


class TestMassLevel:
    """Construction of z and the diagonal anchor."""

    def test_rejects_zero_entry(self):
        with pytest.raises(DomainError):
            MassLevel([1.0, 0.0])

    def test_rejects_infinite_entry(self):
        with pytest.raises(DomainError):
            MassLevel([np.inf])

    def test_from_csv(self):
        assert MassLevel.from_csv("1.5, 2").z.tolist() == [1.5, 2.0]

    def test_from_csv_rejects_text(self):
        with pytest.raises(DomainError):
            MassLevel.from_csv("1,abc")

    def test_anchor_zeros(self):
        assert DiagonalAnchor.zeros(3).a.tolist() == [0.0, 0.0, 0.0]


class TestCoordinateMap:
    """t_z and its inverse."""

    def test_zero_maps_to_zero(self):
        z = MassLevel([1.0, 2.0])
        assert t_z([0.0, 0.0], z).tolist() == [0.0, 0.0]
        assert t_z_inverse([0.0, 0.0], z).tolist() == [0.0, 0.0]

    def test_symmetric_midpoint(self):
        assert t_z([1.0, 1.0], MassLevel([1.0, 1.0])).tolist() == [0.5, 0.5]

    def test_scalar_values(self):
        assert t_z([3.0], MassLevel([1.0]))[0] == pytest.approx(0.75)
        assert t_z_inverse([0.5], MassLevel([2.0]))[0] == pytest.approx(2.0)

    def test_inverse_rejects_coordinate_one(self):
        with pytest.raises(DomainError):
            t_z_inverse([0.2, 1.0], MassLevel([1.0, 1.0]))

    def test_round_trip_random_points(self):
        rng = np.random.default_rng(7)
        z = MassLevel(rng.uniform(0.5, 3.0, size=3))
        for _ in range(200):
            w = rng.uniform(0.0, 10.0, size=3)
            assert np.allclose(t_z_inverse(t_z(w, z), z), w, rtol=1e-12, atol=1e-12)


class TestMeasureMaps:
    """Push-forward under T_z and pull-back under its inverse."""

    def test_empty_measure(self):
        pushed = pushforward(AtomicMeasure.empty(2), MassLevel([1.0, 1.0]))
        assert len(pushed) == 0
        assert pushed.dim == 2

    def test_weights_preserved(self):
        pushed = pushforward(orthant(((1.0, 1.0), 2.0)), MassLevel([1.0, 1.0]))
        assert pushed.isclose(cube(((0.5, 0.5), 2.0)))

    def test_change_of_variables(self):
        rng = np.random.default_rng(11)
        z = MassLevel([0.7, 1.9])
        m = orthant(*((tuple(rng.uniform(0.1, 4.0, size=2)), float(rng.uniform(0.5, 2.0))) for _ in range(5)))
        after = integrate(pushforward(m, z), lambda u: u[0])
        before = integrate(m, lambda w: w[0] / (w[0] + 0.7))
        assert after == pytest.approx(before, rel=1e-12)

    def test_pullback_inverts_pushforward(self):
        m = orthant(((0.5, 2.0), 1.0), ((3.0, 0.0), 0.25))
        z = MassLevel([2.0, 0.5])
        assert pullback(pushforward(m, z), z).isclose(m)


class TestParameterMap:
    """H_z and its inverse."""

    def test_diffusion_becomes_pairwise_rate(self):
        p = BranchingParams(B=[[0.0]], c=[1.0], mu=(orthant(dim=1),))
        q = h_z(p, MassLevel([2.0]))
        assert q.rho.tolist() == [[1.0]]
        assert len(q.Q[0]) == 0

    def test_offdiagonal_rate(self):
        p = BranchingParams(
            B=[[0.0, 0.0], [3.0, 0.0]], c=[0.0, 0.0], mu=(orthant(dim=2), orthant(dim=2))
        )
        q = h_z(p, MassLevel([2.0, 4.0]))
        assert q.rho[0, 1] == pytest.approx(1.5)
        assert q.rho[1, 0] == pytest.approx(0.0)

    def test_jump_measure_pushed_and_scaled(self):
        p = BranchingParams(B=[[0.0]], c=[0.0], mu=(orthant(((1.0,), 1.0)),))
        q = h_z(p, MassLevel([1.0]))
        assert q.Q[0].isclose(cube(((0.5,), 1.0)))

    def test_output_has_no_mass_at_one(self):
        rng = np.random.default_rng(3)
        q = h_z(random_branching(rng, 3), MassLevel([1.0, 2.0, 0.5]))
        assert q.prop

    def test_invalid_branching_refused(self):
        p = BranchingParams(B=[[0.0, -1.0], [0.0, 0.0]], c=[0.0, 0.0], mu=(orthant(dim=2), orthant(dim=2)))
        with pytest.raises(InvalidParamsError) as exc_info:
            h_z(p, MassLevel([1.0, 1.0]))
        assert exc_info.value.report.failed() == ["offdiag_nonneg"]

    def test_inverse_scalar_example(self):
        q = CoalescentParams(rho=[[4.0]], Q=(cube(dim=1),))
        p = h_z_inverse(q, MassLevel([0.5]), DiagonalAnchor([-0.7]))
        assert p.c.tolist() == [1.0]
        assert p.B.tolist() == [[-0.7]]

    def test_inverse_defaults_anchor_to_zero(self):
        q = CoalescentParams(rho=[[4.0]], Q=(cube(dim=1),))
        assert h_z_inverse(q, MassLevel([0.5])).B.tolist() == [[0.0]]

    def test_inverse_rejects_mass_at_one(self):
        q = CoalescentParams(rho=[[0.0]], Q=(cube(((1.0,), 1.0)),))
        with pytest.raises(DomainError):
            h_z_inverse(q, MassLevel([1.0]))

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_round_trip_from_branching(self, d):
        rng = np.random.default_rng(100 + d)
        for _ in range(ROUND_TRIPS_PER_DIM):
            p = random_branching(rng, d)
            z = MassLevel(rng.uniform(0.2, 5.0, size=d))
            back = h_z_inverse(h_z(p, z), z, DiagonalAnchor(np.diag(p.B)))
            assert back.isclose(p, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_round_trip_from_coalescent(self, d):
        rng = np.random.default_rng(200 + d)
        for _ in range(ROUND_TRIPS_PER_DIM):
            q = random_coalescent(rng, d)
            z = MassLevel(rng.uniform(0.2, 5.0, size=d))
            a = DiagonalAnchor(rng.uniform(-1.0, 1.0, size=d))
            assert h_z(h_z_inverse(q, z, a), z).isclose(q, rtol=1e-10, atol=1e-12)

    def test_far_atoms_colliding_after_map_are_merged(self):
        p = BranchingParams(B=[[0.0]], c=[0.0], mu=(orthant(((1e14,), 1.0), ((2e14,), 1.0)),))
        assert validate_branching(p).ok
        q = h_z(p, MassLevel([1.0]))
        assert len(q.Q[0]) == 1
        assert q.Q[0].total_mass == pytest.approx(2.0)


class TestContinuity:
    """H_z moves little when the branching parameters move little."""

    def test_distance_along_weight_scaled_family(self):
        rng = np.random.default_rng(31)
        p = random_branching(rng, 2)
        z = MassLevel([0.7, 1.8])
        base = h_z(p, z)
        distances = []
        for n in (1, 10, 100, 1000):
            p_n = BranchingParams(B=p.B, c=p.c, mu=tuple(m.scaled(1.0 + 1.0 / n) for m in p.mu))
            distances.append(coal_topology_distance(h_z(p_n, z), base, default_probes(2)))
        assert distances[0] > 0
        assert all(a > b for a, b in zip(distances, distances[1:]))
        assert distances == pytest.approx([distances[0] / n for n in (1, 10, 100, 1000)], rel=1e-8)
