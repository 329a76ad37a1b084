import json
from pathlib import Path

import pytest

import csls
from csls.pipeline import compile_model, synthesize

PLANT = Path(csls.__file__).parent / "data" / "packet_dropout_plant.json"


@pytest.fixture(scope="session")
def plant_dict():
    return json.loads(PLANT.read_text())


@pytest.fixture(scope="session")
def dropout_model(plant_dict):
    return compile_model("whrt:2/3:zero", plant_dict)


@pytest.fixture(scope="session")
def nominal_synthesis(dropout_model):
    return synthesize(dropout_model, "nominal")


@pytest.fixture(scope="session")
def robust_synthesis(dropout_model):
    return synthesize(dropout_model, "robust")
