import numpy as np
import pytest

from lumiphon.model import CrystalStructure, GeometryPair, Hessian, structure_checksum

from helpers import isotropic_pair_hessian, random_cluster_structure


@pytest.fixture
def diatomic():
    """Two carbons with an isotropic unit spring; analytic omega = sqrt(2k/m)."""
    structure = CrystalStructure(
        np.eye(3) * 10.0,
        ("C", "C"),
        [12.011, 12.011],
        [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]],
    )
    hessian = Hessian(isotropic_pair_hessian(4.2), structure_checksum(structure))
    return structure, hessian


@pytest.fixture
def small_cluster():
    return random_cluster_structure(8, seed=11)


@pytest.fixture
def displaced_pair(diatomic):
    structure, _ = diatomic
    ground = structure.positions.copy()
    excited = ground + np.array([[0.02, 0.0, 0.0], [-0.02, 0.0, 0.0]])
    return GeometryPair(ground, excited, structure.species)
