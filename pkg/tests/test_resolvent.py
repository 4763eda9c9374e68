import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from homopolymer import kernel as kn
from homopolymer import resolvent as rs

# Watson's integral: I(0) for the simple random walk on Z^3
WATSON = 1.516386059151978


def _closed(lam):
    return 1 / (cmath.sqrt(lam) * cmath.sqrt(lam + 2))


def test_symbol():
    assert rs.symbol_phi([0.0]) == 0
    assert rs.symbol_phi([math.pi]) == pytest.approx(2.0)
    assert rs.symbol_phi([math.pi / 2, 0.0, math.pi]) == pytest.approx(1.0)
    # no underflow near the origin
    assert rs.symbol_phi([1e-9]) == pytest.approx(0.5e-18, rel=1e-12)


@pytest.mark.parametrize("lam", [0.5 + 0j, 3.0 + 0j, -2.5 + 0j, -1 + 0.3j, -0.2 - 0.05j, 1 + 2j])
def test_tensor_matches_closed_form(lam):
    q = rs.free_diagonal_resolvent(lam, 1, route="tensor")
    assert abs(q - _closed(lam)) <= 1e-9 * abs(_closed(lam))


@settings(max_examples=25, deadline=None)
@given(st.floats(-4, 3), st.floats(0.2, 3), st.integers(0, 12))
def test_one_dimensional_resolvent_off_diagonal(re, im, k):
    lam = complex(re, im)
    g = cmath.sqrt(lam) * cmath.sqrt(lam + 2)
    r = 1 + lam - g
    assert abs(rs.one_dim_resolvent(lam, k) - r**k / g) < 1e-12 * abs(1 / g)
    assert abs(rs.free_resolvent(lam, k, 0, 1, route="tensor") - r**k / g) < 1e-8


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("lam", [0.3, 1.5, 0.4 + 1.0j])
def test_reduced_matches_tensor(d, lam):
    for w in [(0,) * d, (1,) + (0,) * (d - 1), (2, 3) + (1,) * (d - 2)]:
        a = rs.free_resolvent(lam, w, (0,) * d, d, route="reduced")
        b = rs.free_resolvent(lam, w, (0,) * d, d, route="tensor")
        assert abs(a - b) < 1e-9


@pytest.mark.parametrize("d", [1, 2, 3])
def test_generator_identity(d):
    # (lam - Delta) R_lam(., 0) = delta_0
    lam = 0.7
    r0 = rs.free_diagonal_resolvent(lam, d).real
    r1 = rs.free_resolvent(lam, (1,) + (0,) * (d - 1), (0,) * d, d).real
    r2 = rs.free_resolvent(lam, (2,) + (0,) * (d - 1), (0,) * d, d).real
    side = rs.free_resolvent(lam, (1, 1) + (0,) * (d - 2), (0,) * d, d).real if d > 1 else 0.0
    assert lam * r0 - (r1 - r0) == pytest.approx(1.0, abs=1e-9)
    # at e1: neighbours 0, 2e1, and 2(d-1) sites e1 +- ej
    lap = (r0 + r2 + 2 * (d - 1) * side) / (2 * d) - r1
    assert lam * r1 - lap == pytest.approx(0.0, abs=1e-9)


def test_a0_is_distance_in_one_dimension():
    for x in (1, 2, 7, -5):
        assert rs.a_function(0.0, x, 1).real == pytest.approx(abs(x), abs=1e-9)


@pytest.mark.parametrize("d", [2, 3])
def test_a0_harmonic_off_origin(d):
    def a(x):
        return rs.a_function(0.0, x, d).real

    e = [tuple(int(i == j) for i in range(d)) for j in range(d)]
    # Delta A_0 = delta_0
    assert sum(2 * a(v) for v in e) / (2 * d) == pytest.approx(1.0, abs=1e-8)
    x = (2,) + (1,) * (d - 1)
    nb = [tuple(xi + s * ei for xi, ei in zip(x, v)) for v in e for s in (1, -1)]
    assert sum(a(y) for y in nb) / (2 * d) - a(x) == pytest.approx(0.0, abs=1e-8)


def test_a_function_is_i_minus_r():
    lam = 0.4
    for d in (2, 3):
        w = (3,) + (0,) * (d - 1)
        a = rs.a_function(lam, w, d)
        assert a == pytest.approx(rs.free_diagonal_resolvent(lam, d) - rs.free_resolvent(lam, w, (0,) * d, d), abs=1e-9)


def test_zero_lambda_diverges_in_low_dimensions():
    assert math.isinf(abs(rs.free_diagonal_resolvent(0.0, 1)))
    assert math.isinf(abs(rs.free_diagonal_resolvent(0.0, 2)))
    assert rs.free_diagonal_resolvent(0.0, 3).real == pytest.approx(WATSON, abs=1e-9)


def test_beta_critical():
    assert rs.beta_critical(1) == 0 and rs.beta_critical(2) == 0
    assert rs.beta_critical(3) == pytest.approx(1 / WATSON, abs=1e-10)


def test_killed_resolvent_one_dimension():
    # R^{-inf}_0(x, y) = |x| + |y| - |x - y|
    for x, y in [(1, 1), (3, 5), (4, -2), (-3, -7)]:
        assert rs.killed_resolvent(0.0, x, y, 1).real == pytest.approx(abs(x) + abs(y) - abs(x - y), abs=1e-8)
    assert rs.killed_resolvent(0.0, 0, 4, 1) == 0


def test_killed_resolvent_symmetric():
    a = rs.killed_resolvent(0.3, (1, 2), (2, -1), 2)
    b = rs.killed_resolvent(0.3, (2, -1), (1, 2), 2)
    assert a == pytest.approx(b, abs=1e-12)


@pytest.mark.parametrize("x", [(1, 0, 0), (2, 1, 0), (3, 3, 1)])
def test_hitting_probability_two_routes(x):
    a = rs.hitting_probability(x, 3, route="killed")
    b = rs.hitting_probability(x, 3, route="green")
    assert 0 < a < 1
    assert a == pytest.approx(b, abs=1e-8)


def test_hitting_probability_recurrent():
    assert rs.hitting_probability(5, 1) == 1.0
    assert rs.hitting_probability((2, 2), 2) == 1.0
    # P_e1(hit 0) = 1 - 1/I(0) in d = 3
    assert rs.hitting_probability((1, 0, 0), 3) == pytest.approx(1 - 1 / WATSON, abs=1e-9)


def test_resolvent_derivative():
    for d, lam in ((1, 0.6), (2, 0.6), (3, 0.3)):
        h = 1e-5
        fd = (rs.free_diagonal_resolvent(lam + h, d) - rs.free_diagonal_resolvent(lam - h, d)).real / (2 * h)
        assert rs.resolvent_derivative(lam, d).real == pytest.approx(fd, rel=1e-6)


def test_perturbed_resolvent_and_pole():
    lam, beta = 0.5, -1.0
    i = rs.free_diagonal_resolvent(lam, 1)
    assert rs.perturbed_diagonal(lam, beta, 1) == pytest.approx(i / (1 - beta * i))
    assert rs.perturbed_resolvent(lam, beta, 0, 0, 1) == pytest.approx(i / (1 - beta * i))
    b = 1 / rs.free_diagonal_resolvent(0.25, 1).real
    with pytest.raises(rs.PoleError):
        rs.perturbed_resolvent(0.25, b, 0, 0, 1)


def test_spectral_param_validation():
    with pytest.raises(ValueError):
        rs.SpectralParam(-1.0)
    with pytest.raises(ValueError):
        rs.SpectralParam(1 + 1j, "lower-half-plane")
    with pytest.raises(ValueError):
        rs.SpectralParam(complex(math.nan, 0))
    assert rs.SpectralParam(0.0).branch_hint == "real-right-of-spectrum"
    assert rs.SpectralParam(-3.0).branch_hint == "real-left-of-spectrum"
    with pytest.raises(ValueError):
        rs.QuadratureSpec(nodes_per_axis=4)


def test_quadrature_failure_is_reported():
    with pytest.raises(rs.QuadratureError):
        rs.free_diagonal_resolvent(-1 + 0.01j, 3)
    tight = rs.QuadratureSpec(abs_tol=1e-30, max_depth=2)
    with pytest.raises(rs.QuadratureError):
        rs.free_diagonal_resolvent(0.001, 2, quad=tight, route="tensor")


@pytest.mark.parametrize("beta", [-1.0, 0.5])
def test_spectral_density_routes(beta):
    for s in (-0.3, -1.0, -1.7):
        exact = rs.spectral_density(beta, s, 1, method="limit")
        rich = rs.spectral_density(beta, s, 1, eps_schedule=[0.02, 0.01, 0.005, 0.0025, 0.00125], method="richardson")
        assert rich == pytest.approx(exact, rel=1e-4)


def test_spectral_atoms_one_dimension():
    (atom,) = rs.spectral_atoms(-1.0, 1)
    assert atom.location == pytest.approx(-1 - math.sqrt(2), abs=1e-10)
    assert atom.mass == pytest.approx(1 / math.sqrt(2), abs=1e-10)
    (right,) = rs.spectral_atoms(0.75, 1)
    assert right.location == pytest.approx(0.25, abs=1e-10)
    assert rs.spectral_atoms(-0.5, 3) == []


@pytest.mark.parametrize("beta", [-1.0, 0.75, -0.3])
def test_spectral_mass_is_one(beta):
    cont = integrate.quad(lambda s: rs.spectral_density(beta, s, 1), -2, 0, limit=200)[0]
    atoms = sum(a.mass for a in rs.spectral_atoms(beta, 1))
    assert cont + atoms == pytest.approx(1.0, abs=1e-7)


# in d=2 the log edge of the density limits Laguerre nodes to about 1e-3
@pytest.mark.parametrize("d, t, rel", [(1, 30.0, 1e-5), (2, 30.0, 2e-3), (2, 300.0, 2e-3)])
def test_stieltjes_route_matches_kernel(d, t, rel):
    p = kn.kernel_series(-1.0, kn.BoxSpec.for_time(t, d), [t]).at_target[0]
    assert rs.p00_from_spectrum(-1.0, d, t) == pytest.approx(p, rel=rel)


def test_bisection():
    for beta in (0.1, 0.75, 2.0):
        assert rs.bisect_lambda(beta, 1) == pytest.approx(math.sqrt(1 + beta**2) - 1, rel=1e-12)
    lam = rs.bisect_lambda(0.8, 2)
    assert 0.8 * rs.free_diagonal_resolvent(lam, 2).real == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        rs.bisect_lambda(0.5, 3)
