import numpy as np
import pytest

from bloch_wannier import fixtures
from bloch_wannier.errors import ConfigError
from bloch_wannier.projector import KGrid


def test_skyrmion_degree():
    assert abs(fixtures.skyrmion_degree(1.0)) == 1
    assert fixtures.skyrmion_degree(3.0) == 0


def test_dirac_degree():
    assert abs(fixtures.dirac_degree(3.0)) == 1
    assert fixtures.dirac_degree(5.0) == 0


def test_skyrmion_projector_is_rank_one():
    kappa = np.array([[0.1, 0.3], [0.5, 0.5], [0.0, 0.0]])
    P = fixtures.skyrmion_projector(kappa)
    assert np.allclose(P @ P, P)
    assert np.allclose(np.trace(P, axis1=-2, axis2=-1), 1.0)


def test_dirac_gammas_anticommute():
    for i, a in enumerate(fixtures.GAMMAS):
        for j, b in enumerate(fixtures.GAMMAS):
            expected = 2 * np.eye(4) if i == j else np.zeros((4, 4))
            assert np.allclose(a @ b + b @ a, expected)


def test_dirac_projector_is_rank_two():
    P = fixtures.dirac_projector(np.array([0.1, 0.2, 0.3, 0.4]))
    assert np.allclose(P @ P, P)
    assert np.trace(P).real == pytest.approx(2.0)


def test_synthetic_fields_check_dimension():
    with pytest.raises(ConfigError):
        fixtures.skyrmion_field(KGrid((4, 4, 4)))
    with pytest.raises(ConfigError):
        fixtures.dirac_field(KGrid((4, 4)))


def test_constant_field():
    field = fixtures.constant_field(KGrid((4,)), size=3, rank=2)
    assert field.rank == 2
    assert np.allclose(field.at((2,)), np.diag([1, 1, 0]))


@pytest.mark.parametrize("name", sorted(fixtures.PHYSICAL))
def test_physical_registry(name):
    model = fixtures.physical(name)
    assert model.name == name


def test_physical_parameters_are_forwarded():
    model = fixtures.physical("cos1d", strength=2.0)
    assert model.potential[(1,)] == pytest.approx(1.0)


def test_unknown_fixture():
    with pytest.raises(ConfigError, match="unknown fixture"):
        fixtures.physical("honeycomb")
