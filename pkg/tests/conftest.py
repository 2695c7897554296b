import os
import sys

import pytest
from typer.testing import CliRunner

# Add src to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "../src")))

from bloch_wannier import fixtures  # noqa: E402
from bloch_wannier.bloch import PlaneWaveBasis  # noqa: E402
from bloch_wannier.config import ModelDocument, SyntheticSpec, dump_model  # noqa: E402
from bloch_wannier.projector import KGrid, RelevantSet, build_projector_field  # noqa: E402


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def cos2d():
    return fixtures.cos2d(5.0)


@pytest.fixture
def magnetic_model():
    return fixtures.magnetic_cos2d(5.0, 0.5)


@pytest.fixture
def gauge_model():
    return fixtures.gauge_cos2d(5.0, 0.2)


@pytest.fixture(scope="session")
def cos2d_field():
    model = fixtures.cos2d(5.0)
    return build_projector_field(model, PlaneWaveBasis(2, 3), KGrid((12, 12)), RelevantSet.lowest(1))


@pytest.fixture(scope="session")
def skyrmion():
    return fixtures.skyrmion_field(KGrid((24, 24)), 1.0)


@pytest.fixture
def model_file(tmp_path):
    """Write a physical model document and return its path"""

    def _write(model, name="model.json"):
        path = tmp_path / name
        path.write_text(dump_model(model).model_dump_json(indent=2))
        return path

    return _write


@pytest.fixture
def synthetic_file(tmp_path):
    def _write(name, dimension, mass=None):
        document = ModelDocument(dimension=dimension, synthetic=SyntheticSpec(name=name, mass=mass), name=name)
        path = tmp_path / f"{name}.json"
        path.write_text(document.model_dump_json(indent=2))
        return path

    return _write
