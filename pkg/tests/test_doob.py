import math

import numpy as np
import pytest

from homopolymer import doob
from homopolymer import harmonic as hm
from homopolymer import kernel as kn
from homopolymer.rng import REPLICA_BLOCK


@pytest.mark.parametrize("d, beta", [(1, -1.0), (1, 0.5), (2, -1.0), (2, 1.0), (3, -0.5)])
def test_rates_sum(d, beta):
    p = hm.model_params(d, beta)
    x_off = (2,) + (1,) * (d - 1)
    assert doob.q_rates(p, x_off).total == pytest.approx(1.0 + p.lambda_beta, rel=1e-8)
    assert doob.q_rates(p, (0,) * d).total == pytest.approx(1 - beta + p.lambda_beta, rel=1e-8)


def test_rates_d1_explicit():
    p = hm.model_params(1, -1.0)
    r = doob.q_rates(p, 3).neighbor_rates
    assert r[(1,)] == pytest.approx(5 / 8)
    assert r[(-1,)] == pytest.approx(3 / 8)


@pytest.mark.parametrize("d, beta", [(1, -1.0), (1, 0.4), (2, -0.5), (2, 1.2)])
def test_psi_field_matches_psi(d, beta):
    p = hm.model_params(d, beta)
    f = doob.PsiField(p, radius=4)
    sites = np.array([(3,) + (0,) * (d - 1), (-7,) + (2,) * (d - 1), (0,) * d, (12,) + (-1,) * (d - 1)])
    expected = [hm.psi(p, s) for s in sites]
    assert f(sites) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("d, beta", [(1, -1.0), (2, -1.0), (1, 0.5)])
def test_q_kernel_is_stochastic(d, beta):
    p = hm.model_params(d, beta)
    t = 6.0
    box = kn.BoxSpec.for_time(t, d)
    q = doob.q_kernel(p, box, t)
    assert abs(q.total() - 1) <= q.truncation_error_bound + 1e-10


def test_q_kernel_from_other_start():
    p = hm.model_params(1, -1.0)
    q = doob.q_kernel(p, kn.BoxSpec(40, 1), 5.0, 3)
    assert abs(q.total() - 1) <= q.truncation_error_bound + 1e-10


def test_single_path():
    p = hm.model_params(1, -1.0)
    path = doob.simulate_q(p, 0, 20.0, seed=3)
    assert path.horizon == 20.0
    steps = np.abs(np.diff(path.sites[:, 0]))
    assert np.all(steps == 1)
    again = doob.simulate_q(p, 0, 20.0, seed=3)
    assert np.array_equal(path.jump_times, again.jump_times)


def test_ensemble_reproducible_and_block_invariant():
    p = hm.model_params(1, -1.0)
    a = doob.simulate_q_ensemble(p, 0, 10.0, REPLICA_BLOCK + 50, seed=5)
    b = doob.simulate_q_ensemble(p, 0, 10.0, REPLICA_BLOCK + 50, seed=5)
    c = doob.simulate_q_ensemble(p, 0, 10.0, REPLICA_BLOCK, seed=5)
    assert np.array_equal(a.endpoint, b.endpoint)
    assert np.array_equal(a.endpoint[:REPLICA_BLOCK], c.endpoint)
    assert np.array_equal(a.occupation[:REPLICA_BLOCK], c.occupation)
    d = doob.simulate_q_ensemble(p, 0, 10.0, REPLICA_BLOCK, seed=6)
    assert not np.array_equal(c.endpoint, d.endpoint)


def test_ensemble_summaries_consistent():
    p = hm.model_params(1, -1.0)
    e = doob.simulate_q_ensemble(p, 0, 15.0, 2000, seed=1, record_times=(5.0, 15.0))
    assert np.all((e.occupation >= 0) & (e.occupation <= 15.0))
    assert np.all(e.last_zero >= e.occupation - 1e-12)
    assert np.all(e.last_zero <= 15.0)
    assert np.array_equal(e.records[:, -1], e.endpoint)
    # at the horizon the last zero is the horizon exactly when the walk ends at 0
    assert np.array_equal(e.last_zero == 15.0, ~e.endpoint.any(axis=1))
    with pytest.raises(ValueError):
        doob.simulate_q_ensemble(p, 0, 5.0, 10, seed=1, record_times=(6.0,))


def test_ensemble_endpoint_matches_kernel():
    p = hm.model_params(1, -1.0)
    t, n = 8.0, 20000
    e = doob.simulate_q_ensemble(p, 0, t, n, seed=2)
    box = kn.BoxSpec.for_time(t, 1)
    q = doob.q_kernel(p, box, t).values
    y = np.abs(np.arange(-box.radius, box.radius + 1))
    mean, second = float(q @ y), float(q @ y**2)
    sd = math.sqrt(second - mean**2)
    est = np.abs(e.endpoint[:, 0]).mean()
    assert abs(est - mean) < 4 * sd / math.sqrt(n)


@pytest.mark.parametrize("d, t", [(1, 20.0), (2, 10.0)])
def test_polymer_partition_estimate(d, t):
    p = hm.model_params(d, -1.0)
    ens = doob.sample_polymer(p, t, 20000, seed=4)
    z = kn.partition_function(-1.0, kn.BoxSpec.for_time(t, d), t).value
    est = ens.z_estimate
    assert abs(est.mean - z) < 4 * est.stderr
    assert ens.weights.sum() == pytest.approx(1.0)
    assert 0 < ens.ess <= 20000


def test_polymer_weighted_mean_matches_kernel():
    # E_polymer[|X_t|] from the kernel against the reweighted ensemble
    p = hm.model_params(1, -1.0)
    t, n = 10.0, 20000
    ens = doob.sample_polymer(p, t, n, seed=8)
    box = kn.BoxSpec.for_time(t, 1)
    g = kn.propagate(-1.0, box, t, 0).values
    g = g / g.sum()
    y = np.abs(np.arange(-box.radius, box.radius + 1))
    ref = float(g @ y)
    sd = math.sqrt(float(g @ y**2) - ref**2)
    assert abs(ens.mean(np.abs(ens.paths.endpoint[:, 0])) - ref) < 4 * sd / math.sqrt(ens.ess)


def test_polymer_preconditions_and_ess_floor():
    with pytest.raises(ValueError):
        doob.sample_polymer(hm.model_params(1, 0.5), 5.0, 10, seed=1)
    with pytest.raises(ValueError):
        doob.sample_polymer(hm.model_params(3, -1.0), 5.0, 10, seed=1)
    with pytest.raises(doob.ESSError):
        doob.sample_polymer(hm.model_params(1, -1.0), 20.0, 500, seed=1, ess_floor=1.0)


def test_ess():
    assert doob.effective_sample_size(np.ones(10)) == pytest.approx(10)
    assert doob.effective_sample_size(np.array([1.0, 0.0, 0.0])) == pytest.approx(1)


def test_return_probability():
    p = hm.model_params(1, -1.0)
    rep = doob.q_return_probability(p, 20000, seed=7)
    assert rep.expected == pytest.approx(99 / 200)
    assert abs(rep.z_score) < 4
    with pytest.raises(ValueError):
        doob.q_return_probability(hm.model_params(2, -1.0), 10, seed=1)
    with pytest.raises(ValueError):
        doob.q_return_probability(p, 10, seed=1, start=0)


def test_coupling_domination():
    p = hm.model_params(1, -1.0)
    rep = doob.coupling_domination_test(p, 3, (2.0, 10.0), 4000, seed=11)
    assert rep.passed
    with pytest.raises(ValueError):
        doob.coupling_domination_test(p, -1, (1.0,), 10, seed=1)


@pytest.mark.parametrize("x", [1, 4])
def test_translation_bound(x):
    p = hm.model_params(1, -1.0)
    zx, bound = doob.translation_bound_check(p, x, 30.0, kn.BoxSpec.for_time(30.0, 1))
    assert zx <= bound
    assert zx > 0
