import numpy as np
import pytest

from homopolymer.rng import REPLICA_BLOCK, SEED_ENV, replica_sizes, resolve_seed, stream


def test_streams_are_reproducible():
    assert np.array_equal(stream(5, 1, 2).random(10), stream(5, 1, 2).random(10))


def test_distinct_keys_give_distinct_streams():
    a = stream(5, 1).random(10)
    assert not np.array_equal(a, stream(5, 2).random(10))
    assert not np.array_equal(a, stream(6, 1).random(10))


def test_negative_keys_rejected():
    with pytest.raises(ValueError):
        stream(-1)
    with pytest.raises(ValueError):
        stream(1, -2)


def test_seed_override(monkeypatch):
    assert resolve_seed(None, 3) == 3
    assert resolve_seed(7) == 7
    monkeypatch.setenv(SEED_ENV, "11")
    assert resolve_seed(7) == 11


def test_replica_sizes():
    assert replica_sizes(0) == []
    assert replica_sizes(REPLICA_BLOCK + 5) == [REPLICA_BLOCK, 5]
    assert sum(replica_sizes(12345, 100)) == 12345
    with pytest.raises(ValueError):
        replica_sizes(-1)
