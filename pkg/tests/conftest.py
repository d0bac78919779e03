import entsum.tensor as tensor_mod
import pytest


@pytest.fixture(autouse=True)
def _grad_mode_hygiene():
    tensor_mod._GRAD_ENABLED = True
    yield
    tensor_mod._GRAD_ENABLED = True
