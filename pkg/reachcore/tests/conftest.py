import pytest

from reachcore.defaults import defaults


@pytest.fixture(autouse=True)
def reset_defaults():
    # several tests switch presets; never leak them into the next test
    yield
    defaults.deactivate()
