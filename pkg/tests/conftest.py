import json
import os

import pytest

FROZEN_DIR = os.path.join(os.path.dirname(__file__), "oracles", "frozen")


def load_frozen(name):
    with open(os.path.join(FROZEN_DIR, name)) as f:
        return json.load(f)


@pytest.fixture(scope="session")
def mc_moments():
    return load_frozen("mc_moments.json")


@pytest.fixture(scope="session")
def slow_solvers():
    return load_frozen("slow_solvers.json")


@pytest.fixture(scope="session")
def surrogate_mc():
    return load_frozen("surrogate_mc.json")


@pytest.fixture(scope="session")
def mp_quadrature():
    return load_frozen("mp_quadrature.json")
