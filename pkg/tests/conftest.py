import json
import os

import numpy as np
import pytest

import measurements
import states

SCHEMA_PATH = os.path.join(os.path.dirname(__file__), os.pardir, "schemas", "report.schema.json")


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Every test starts from the documented defaults, with no ledger."""
    for name in ("STEERLAB_THREADS", "STEERLAB_ENUM_CAP", "STEERLAB_MC_CHUNK",
                 "STEERLAB_LOG_LEVEL", "STEERLAB_LEDGER"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def report_schema():
    with open(SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture
def singlet():
    return states.werner_state(2, 1.0)


@pytest.fixture
def qubit_mub():
    return measurements.mub_pair(2)


@pytest.fixture
def random_tstate(rng):
    """Draws t with |t_i| in [0.2, 0.6] and random signs until it is a valid state."""
    def draw():
        while True:
            t = rng.uniform(0.2, 0.6, size=3) * rng.choice([-1.0, 1.0], size=3)
            try:
                states.t_state(t)
            except ValueError:
                continue
            return t
    return draw
