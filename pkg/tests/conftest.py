"""
Shared fixtures: small parameter sets used across the test modules.
"""

import json

import pytest

from params_factory import cube, orthant
from src.models.params import BranchingParams, CoalescentParams


@pytest.fixture
def kingman():
    """d = 1 Kingman coalescent with rho = 1."""
    return CoalescentParams(rho=[[1.0]], Q=(cube(dim=1),))


@pytest.fixture
def two_type_branching():
    """Two types with migration both ways and one jump atom in colony 0."""
    return BranchingParams(
        B=[[-0.5, 0.4], [0.3, -0.2]],
        c=[0.5, 0.25],
        mu=(orthant(((1.0, 0.5), 0.8)), orthant(dim=2)),
    )


@pytest.fixture
def branching_file(tmp_path, two_type_branching):
    path = tmp_path / "branching.json"
    path.write_text(json.dumps(two_type_branching.to_dict()))
    return path


@pytest.fixture
def migrating_pair():
    """Symmetric migration, unit diffusion and one jump atom per type."""
    return BranchingParams(
        B=[[-0.5, 0.5], [0.5, -0.5]],
        c=[1.0, 1.0],
        mu=(orthant(((0.5, 0.2), 1.0)), orthant(((0.1, 1.0), 0.5))),
    )
