import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homopolymer import lattice as lt


def _path():
    # 0 on [0,1), 1 on [1,2), 0 on [2,4), -1 on [4,5]
    return lt.Path(np.array([1.0, 2.0, 4.0]), np.array([[0], [1], [0], [-1]]), 5.0)


def test_sites_and_dimensions():
    assert lt.as_site(3) == (3,)
    assert lt.as_site([1, -2], 2) == (1, -2)
    assert lt.origin(3) == (0, 0, 0)
    with pytest.raises(ValueError):
        lt.as_site([1, 2], 3)
    with pytest.raises(ValueError):
        lt.check_dimension(4)
    steps = lt.unit_steps(2)
    assert steps.shape == (4, 2) and np.all(np.abs(steps).sum(axis=1) == 1)


@pytest.mark.parametrize(
    "times, sites, horizon",
    [
        ([2.0, 1.0], [[0], [1], [0]], 3.0),
        ([1.0], [[0], [2]], 3.0),
        ([1.0, 4.0], [[0], [1], [0]], 3.0),
        ([1.0], [[0], [1], [0]], 3.0),
        ([], [[0]], -1.0),
    ],
)
def test_path_invariants(times, sites, horizon):
    with pytest.raises(ValueError):
        lt.Path(np.array(times), np.array(sites), horizon)


def test_path_is_read_only():
    p = _path()
    with pytest.raises(ValueError):
        p.sites[0, 0] = 3


def test_position_and_restrict():
    p = _path()
    assert p.position(np.array([0.0, 1.0, 1.5, 2.0, 5.0]))[:, 0].tolist() == [0, 1, 1, 0, -1]
    r = p.restrict(3.0)
    assert r.n_jumps == 2 and r.end == (0,)
    with pytest.raises(ValueError):
        p.position(6.0)


def test_occupation_functionals():
    p = _path()
    s = lt.occupation_stats(p)
    assert s.occupation_time_at_origin == pytest.approx(3.0)
    assert s.last_zero_time == pytest.approx(4.0)
    assert s.zero_visit_count == 1
    assert lt.occupation_time(p, 0.5, 2.5) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_occupation_is_additive(seed, u, v):
    p = lt.simulate_free_walk(1, 0, 20.0, seed)
    a, b = sorted((20.0 * u, 20.0 * v))
    whole = lt.occupation_time(p, 0.0, b)
    assert whole == pytest.approx(lt.occupation_time(p, 0.0, a) + lt.occupation_time(p, a, b), abs=1e-12)


def test_free_walk_paths_are_valid_and_reproducible():
    p = lt.simulate_free_walk(2, (1, -1), 30.0, 4)
    q = lt.simulate_free_walk(2, (1, -1), 30.0, 4)
    assert p.start == (1, -1)
    assert np.array_equal(p.jump_times, q.jump_times)


def test_free_walk_endpoint_moments():
    # E|X_t|^2 = t for the rate-1 walk in any dimension
    t, n = 40.0, 40_000
    for d in (1, 3):
        x = lt.free_walk_endpoints(d, lt.origin(d), t, n, 9)
        sq = (x**2).sum(axis=1)
        assert abs(sq.mean() - t) < 5 * sq.std() / math.sqrt(n)
        assert abs(x.mean()) < 5 * math.sqrt(t / d / n)


def test_rescale_path():
    p = lt.simulate_free_walk(1, 0, 100.0, 1)
    v = lt.rescale_path(p, 100.0, [0.0, 0.5, 1.0])
    assert v[0] == 0 and v[2] == p.end[0] / 10
    with pytest.raises(ValueError):
        lt.rescale_path(p, 200.0, [1.0])


def test_passage_table_matches_exact_law():
    # P(K >= k) = C(2k, k) / 4^k for the half-length of a unit first passage
    k = np.arange(1, 40)
    exact = np.array([math.comb(2 * int(j), int(j)) / 4 ** int(j) for j in k])
    assert np.allclose(lt._PASSAGE_TAIL[k], exact, rtol=1e-12)
    big = np.array([5000, 10**6])
    ref = np.exp(np.array([math.lgamma(2 * j + 1) - 2 * math.lgamma(j + 1) - j * math.log(4) for j in big]))
    assert np.allclose(lt._passage_tail_asymptotic(big), ref, rtol=1e-9)


def test_passage_steps_law():
    # one-dimensional first passage over one level in S steps: P(S = 1) = 1/2, P(S = 3) = 1/8
    rng = lt.stream(3, 99)
    s = lt.passage_steps(rng, np.ones(200_000, dtype=np.int64))
    assert np.all(s % 2 == 1)
    assert abs((s == 1).mean() - 0.5) < 0.005
    assert abs((s == 3).mean() - 0.125) < 0.004


def test_return_probability_recurrent_dimension():
    # escape is only checked between first passages, and in d = 1 every passage ends at 0
    assert lt.return_probability_mc(1, 2000, 20, 5).mean == 1.0


def test_return_probability_three_dimensions():
    # 1 - beta_cr(3) = 0.340537...; radius 10^3 biases the frequency by about 1e-3
    est = lt.return_probability_mc(3, 20_000, 1000, 6)
    assert abs(est.mean - 0.3405373) < 4 * est.stderr + 2e-3


def test_mc_estimate_interval():
    e = lt.MCEstimate(0.5, 0.1, 10)
    assert e.interval(2.0) == (pytest.approx(0.3), pytest.approx(0.7))
