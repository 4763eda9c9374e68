import os

import pytest

from homopolymer.rng import SEED_ENV


@pytest.fixture(autouse=True)
def _no_seed_override(monkeypatch):
    # tests pin their own seeds
    monkeypatch.delenv(SEED_ENV, raising=False)
    yield
