import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from homopolymer import kernel as kn
from homopolymer import resolvent as rs


def test_box_validation():
    with pytest.raises(ValueError):
        kn.BoxSpec(5, 1)
    with pytest.raises(ValueError):
        kn.BoxSpec(10.5, 1)
    with pytest.raises(ValueError):
        kn.BoxSpec(10, 4)
    with pytest.raises(kn.MemoryBudgetError):
        kn.BoxSpec(2000, 3)
    box = kn.BoxSpec(10, 2)
    assert box.n_sites == 21**2
    assert box.index((0, 0)) == 10 * 21 + 10
    with pytest.raises(ValueError):
        box.index((11, 0))
    assert kn.BoxSpec.for_time(100, 1).radius == 70


def test_generator_rows():
    g = kn.box_generator(-0.5, kn.BoxSpec(10, 2)).toarray()
    assert np.allclose(g, g.T)
    centre = kn.BoxSpec(10, 2).index((0, 0))
    assert g[centre, centre] == pytest.approx(-1.5)
    # interior rows of Delta sum to zero
    assert abs(g[centre + 1].sum()) < 1e-15


@pytest.mark.parametrize("t", [0.5, 5.0, 40.0])
def test_free_kernel_is_bessel(t):
    # d=1, beta=0: p_t(0, y) = exp(-t) I_y(t)
    box = kn.BoxSpec.for_time(t, 1)
    g = kn.propagate(0.0, box, t, 0)
    y = np.arange(-box.radius, box.radius + 1)
    assert np.max(np.abs(g.values - special.ive(np.abs(y), t))) < 1e-12
    assert g.truncation_error_bound < 1e-6


def test_free_kernel_product_form_d2():
    t = 6.0
    box = kn.BoxSpec.for_time(t, 2)
    g = kn.propagate(0.0, box, t, (0, 0))
    one = special.ive(np.abs(np.arange(-box.radius, box.radius + 1)), t / 2)
    assert np.max(np.abs(g.values - np.outer(one, one))) < 1e-12


def test_time_zero_is_delta():
    g = kn.propagate(-1.0, kn.BoxSpec(10, 2), 0.0, (1, -2))
    assert g.value((1, -2)) == 1.0
    assert g.total() == 1.0


def test_mass_and_exit_bound():
    t = 30.0
    box = kn.BoxSpec(12, 1)
    g = kn.propagate(0.0, box, t, 0)
    lost = 1 - g.total()
    assert 0 < lost <= g.truncation_error_bound


def test_rk4_agrees_with_uniformization():
    box = kn.BoxSpec(15, 2)
    a = kn.propagate(-0.7, box, 4.0, (0, 0))
    b = kn.propagate(-0.7, box, 4.0, (0, 0), method="rk4")
    assert np.max(np.abs(a.values - b.values)) < 1e-8
    with pytest.raises(ValueError):
        kn.propagate(-0.7, box, 4.0, (0, 0), method="euler")


def test_semigroup():
    box = kn.BoxSpec(20, 1)
    s, t = 3.0, 5.0
    direct = kn.propagate(0.8, box, s + t, 0).values
    first = kn.propagate(0.8, box, s, 0).values
    via = sum(w * kn.propagate(0.8, box, t, int(y)).values for y, w in zip(range(-20, 21), first) if w > 0)
    assert np.max(np.abs(direct - via)) < 1e-11


def test_symmetry():
    box = kn.BoxSpec(12, 2)
    a = kn.propagate(-0.4, box, 3.0, (2, 1))
    b = kn.propagate(-0.4, box, 3.0, (-1, 0))
    assert a.value((-1, 0)) == pytest.approx(b.value((2, 1)), rel=1e-12)


def test_monotone_in_beta():
    box = kn.BoxSpec(15, 1)
    zs = [kn.partition_function(b, box, 10.0).value for b in (-2.0, -1.0, 0.0, 0.5)]
    assert all(a < b for a, b in zip(zs, zs[1:]))


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3))
def test_small_time_partition(beta):
    # Z_t = 1 + beta t + O(t^2) from the origin
    t = 1e-3
    z = kn.partition_function(beta, kn.BoxSpec(10, 1), t).value
    assert abs(z - 1 - beta * t) < 2 * (1 + beta * beta) * t * t


def test_times_share_one_pass():
    box = kn.BoxSpec(20, 1)
    grids = kn.propagate_times(-1.0, box, [1.0, 4.0], 0)
    for g in grids:
        single = kn.propagate(-1.0, box, g.time, 0)
        assert np.max(np.abs(g.values - single.values)) < 1e-13


def test_kernel_series_matches_propagate():
    box = kn.BoxSpec(20, 2)
    s = kn.kernel_series(-1.0, box, [2.0, 7.0], target=(1, 0))
    for t, z, p in zip(s.times, s.partition, s.at_target):
        g = kn.propagate(-1.0, box, t, (0, 0))
        assert z == pytest.approx(g.total(), rel=1e-12)
        assert p == pytest.approx(g.value((1, 0)), rel=1e-12)


def test_evolve_rejects_negative_time():
    with pytest.raises(ValueError):
        kn.evolve(kn.box_generator(0.0, kn.BoxSpec(10, 1)), np.eye(21)[10], [-1.0])


def test_laplace_consistency():
    rep = kn.partition_laplace_check(-1.0, 1, [0.5, 1.0])
    assert rep.max_rel_error < 1e-6


def test_asymptote_report_and_bound():
    rep = kn.p00_asymptote_check(-1.0, 1, [100.0, 400.0])
    assert rep.approaching
    assert abs(rep.ratios[-1] - 1) < 0.05
    with pytest.raises(kn.TruncationError):
        kn.p00_asymptote_check(-1.0, 1, [100.0, 400.0], box=kn.BoxSpec(10, 1))
    with pytest.raises(ValueError):
        kn.p00_asymptote(0.5, 1, 10.0)


@pytest.mark.parametrize("t", [0.3, 4.0, 50.0])
@pytest.mark.parametrize("w", [1, 3])
def test_tilde_psi_d1(t, w):
    # p_t(0) - p_t(w) for the free walk
    ref = special.ive(0, t) - special.ive(w, t)
    assert kn.tilde_psi(t, w, 1) == pytest.approx(ref, rel=1e-10, abs=1e-15)


def test_tilde_psi_d2_against_kernel():
    t = 5.0
    g = kn.propagate(0.0, kn.BoxSpec.for_time(t, 2), t, (0, 0))
    assert kn.tilde_psi(t, (1, 2), 2) == pytest.approx(g.value((0, 0)) - g.value((1, 2)), rel=1e-9)
    assert kn.tilde_psi(t, (0, 0), 2) == 0.0


def test_a0_integral():
    rep = kn.a0_integral_check(2, d=1)
    assert rep.a0 == pytest.approx(2.0, rel=1e-9)
    assert rep.rel_error < 1e-3


def test_partition_reflects_resolvent_at_large_lambda():
    # Laplace transform at large lambda is dominated by small t
    lam = 50.0
    rep = kn.partition_laplace_check(0.5, 2, [lam], horizon=math.log(1e9) / lam)
    exact = 1 / (lam * (1 - 0.5 * rs.free_diagonal_resolvent(lam, 2).real))
    assert rep.exact[0] == pytest.approx(exact)
    assert rep.max_rel_error < 1e-6
