import os

os.environ.setdefault("ENVIRONMENT", "test")

import pytest

from polyfract.services.fixtures import load_example
from polyfract.services.system import require_valid


def _system(name):
    return require_valid(load_example(name))


@pytest.fixture(scope="session")
def carpet():
    return _system("carpet")


@pytest.fixture(scope="session")
def folded_square():
    return _system("folded-square")


@pytest.fixture(scope="session")
def folded_triangle():
    return _system("folded-triangle")


@pytest.fixture(scope="session")
def hexa():
    return _system("hexa-d3")
