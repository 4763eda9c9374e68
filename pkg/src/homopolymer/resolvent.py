"""Laplace-domain objects of the lattice walk: I, R_lambda, A_lambda, I^beta, h_beta.

Conventions. The generator is Delta u(x) = (1/2d) sum_{|y-x|=1} (u(y) - u(x)),
with symbol Phi(phi) = (1/d) sum_j (1 - cos phi_j), and

    R_lambda(x, 0) = pi^-d  int_{[0,pi]^d} prod_j cos(phi_j x_j) / (lambda + Phi) dphi.

(The full-torus integral of cos<phi, x> folds onto the positive cube because
Phi is even in every coordinate.)

Three independent evaluation routes exist:

* ``closed``: d = 1 only, I = 1 / (sqrt(lambda) sqrt(lambda + 2)) and
  R_lambda(x, 0) = I r^|x|, r = 1 + lambda - sqrt(lambda) sqrt(lambda + 2).
* ``tensor``: tensor Gauss-Legendre over [0, pi]^d, dyadically refined toward
  phi = 0 when the scheme asks for it.
* ``reduced``: the last coordinate is integrated in closed form (it is a d = 1
  resolvent), leaving a (d-1)-dimensional integral. Used near the cut and for
  large |x|, and as a cross-check of the tensor route.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special

from .lattice import Site, as_site, check_dimension

POLE_THRESHOLD = 1e-12

# Distance from the cut [-2, 0] below which the tensor route is not trusted
# for complex lambda; the reduced route takes over (d <= 2).
_NEAR_CUT = 0.5

BRANCHES = ("upper-half-plane", "lower-half-plane", "real-right-of-spectrum", "real-left-of-spectrum")
SCHEMES = ("tensor", "dyadic")


class QuadratureError(RuntimeError):
    """A quadrature did not reach its requested absolute tolerance."""

    def __init__(self, message: str, estimate: complex | None = None, error: float | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class PoleError(ZeroDivisionError):
    """1 - beta I(lambda) vanishes (to the pole threshold) at ``lam``."""

    def __init__(self, lam: complex, beta: float, gap: float):
        super().__init__(f"pole of I^beta at lambda={lam} (beta={beta}, |1 - beta I| = {gap:.3e})")
        self.lam = lam
        self.beta = beta
        self.gap = gap


class ExtrapolationError(RuntimeError):
    """Richardson extrapolation in epsilon did not settle."""


@dataclass(frozen=True)
class QuadratureSpec:
    nodes_per_axis: int = 16
    scheme: str = "dyadic"
    abs_tol: float = 1e-10
    max_depth: int = 64

    def __post_init__(self):
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 8:
            raise ValueError("nodes_per_axis must be an integer >= 8")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be positive")


DEFAULT_QUAD = QuadratureSpec()


def _branch_of(lam: complex) -> str:
    if lam.imag > 0:
        return "upper-half-plane"
    if lam.imag < 0:
        return "lower-half-plane"
    return "real-right-of-spectrum" if lam.real >= 0 else "real-left-of-spectrum"


@dataclass(frozen=True)
class SpectralParam:
    """A spectral parameter off the spectrum [-2, 0] of Delta (0 itself allowed)."""

    lam: complex
    branch_hint: str = ""

    def __post_init__(self):
        lam = complex(self.lam)
        if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
            raise ValueError("lambda must be finite")
        if lam.imag == 0 and -2.0 <= lam.real < 0.0:
            raise ValueError(f"lambda={lam.real} lies on the spectrum [-2, 0]; move it off the cut with an imaginary part")
        hint = self.branch_hint or _branch_of(lam)
        if hint not in BRANCHES:
            raise ValueError(f"branch_hint must be one of {BRANCHES}")
        if hint != _branch_of(lam):
            raise ValueError(f"branch_hint {hint!r} is inconsistent with lambda={lam}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "branch_hint", hint)


def _lam(lam: SpectralParam | complex | float) -> complex:
    return lam.lam if isinstance(lam, SpectralParam) else SpectralParam(lam).lam


def _quad(quad: QuadratureSpec | None) -> QuadratureSpec:
    return DEFAULT_QUAD if quad is None else quad


# ---------------------------------------------------------------------------
# symbol and the one-dimensional closed forms


def symbol_phi(phi: Sequence[float] | np.ndarray, d: int | None = None) -> np.ndarray | float:
    """Phi(phi) = (1/d) sum_j (1 - cos phi_j); the last axis of ``phi`` indexes j.

    Written as (2/d) sum sin^2(phi_j / 2), which keeps full relative accuracy
    for tiny angles.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 0:
        phi = phi[None]
    if d is not None and phi.shape[-1] != d:
        raise ValueError(f"angle vector has {phi.shape[-1]} components, expected d={d}")
    out = 2.0 * np.mean(np.sin(0.5 * phi) ** 2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def _g(b):
    """sqrt(b) sqrt(b + 2) with principal roots: analytic off [-2, 0], ~ b at infinity."""
    return np.sqrt(b) * np.sqrt(b + 2)


def _ratio(b):
    """The root of r^2 - 2(1+b) r + 1 = 0 with |r| < 1."""
    return 1 + b - _g(b)


def one_dim_resolvent(lam: complex, k: int = 0) -> complex:
    """Closed form R_lambda(k, 0) in d = 1."""
    b = complex(lam)
    if b == 0:
        return complex(math.inf)
    return complex(_ratio(b) ** abs(int(k)) / _g(b))


def one_dim_boundary_value(s: float) -> complex:
    """lim_{eps -> 0+} I(s + i eps) for d = 1 and s in (-2, 0)."""
    if not -2 < s < 0:
        raise ValueError("s must lie strictly inside (-2, 0)")
    return -1j / (math.sqrt(-s) * math.sqrt(2 + s))


# ---------------------------------------------------------------------------
# tensor quadrature over [0, pi]^m with dyadic refinement toward the origin


@lru_cache(maxsize=None)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _box_rule(lo: Sequence[float], side: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gl(n)
    m = len(lo)
    axes = [lo[j] + 0.5 * side * (x + 1) for j in range(m)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    wts = np.ones(1)
    for _ in range(m):
        wts = np.multiply.outer(wts, 0.5 * side * w)
    return pts, wts.ravel()


def _nodes_for(n: int, freq: float, side: float) -> int:
    # enough nodes to resolve cos(freq * phi) over an interval of length ``side``
    return n + int(math.ceil(0.75 * freq * side))


def _box_sum(f, lo, side, n, freq):
    n1 = _nodes_for(n, freq, side)
    n2 = n1 + max(4, n1 // 2)
    p1, w1 = _box_rule(lo, side, n1)
    p2, w2 = _box_rule(lo, side, n2)
    v1 = w1 @ f(p1)
    v2 = w2 @ f(p2)
    return v2, np.abs(v2 - v1)


def _cube_integral(f, m: int, quad: QuadratureSpec, freq: float = 0.0):
    """pi^-m int_{[0,pi]^m} f; ``f`` maps (N, m) points to (N, k) values.

    Returns (values, error estimates), both of shape (k,).
    """
    n = quad.nodes_per_axis
    if quad.scheme == "tensor":
        panels = max(1, int(math.ceil(freq / 8)))
        side = math.pi / panels
        total = err = 0
        for idx in itertools.product(range(panels), repeat=m):
            v, e = _box_sum(f, [i * side for i in idx], side, n, freq)
            total = total + v
            err = err + e
        return total / math.pi**m, err / math.pi**m
    # dyadic: shells [0,h]^m \ [0,h/2]^m, each split into 2^m - 1 boxes of side h/2
    total = err = 0
    h = math.pi
    corners = [c for c in itertools.product((0, 1), repeat=m) if any(c)]
    for _depth in range(quad.max_depth):
        half = 0.5 * h
        shell = shell_err = 0
        for c in corners:
            v, e = _box_sum(f, [ci * half for ci in c], half, n, freq)
            shell = shell + v
            shell_err = shell_err + e
        total = total + shell
        err = err + shell_err
        h = half
        # the skipped corner box scales like the last shell; small values get relative accuracy
        scale = np.minimum(1.0, np.abs(total) / math.pi**m)
        if np.all(np.abs(shell) / math.pi**m < 0.1 * quad.abs_tol * scale):
            break
    else:
        err = err + np.abs(shell)
    return total / math.pi**m, err / math.pi**m


def _check(values, errors, quad: QuadratureSpec, what: str):
    worst = float(np.max(errors)) if np.size(errors) else 0.0
    if not np.all(np.isfinite(values)):
        raise QuadratureError(f"{what}: non-finite quadrature value", None, worst)
    if worst > quad.abs_tol:
        raise QuadratureError(f"{what}: error estimate {worst:.2e} exceeds abs_tol {quad.abs_tol:.1e}", values, worst)
    return values


# ---------------------------------------------------------------------------
# batched integrals: 'R' -> R_lambda(w, 0), 'A' -> A_lambda(w), 'I2' -> -I'(lambda)


def _one_minus_cos_product(p: np.ndarray, ws: np.ndarray) -> np.ndarray:
    """1 - prod_j cos(p_j w_j) for every (point, w) pair, accurate for small angles."""
    acc = np.zeros((len(p), len(ws)))
    for j in range(ws.shape[1]):
        sj = 2.0 * np.sin(0.5 * np.outer(p[:, j], ws[:, j])) ** 2
        acc = acc + sj - acc * sj
    return acc


def _tensor_batch(lam: complex, ws: np.ndarray, kind: str, quad: QuadratureSpec) -> np.ndarray:
    d = ws.shape[1]
    real = lam.imag == 0
    freq = float(np.abs(ws).max()) if ws.size else 0.0

    def f(p):
        den = lam.real + symbol_phi(p) if real else lam + symbol_phi(p)
        if kind == "I2":
            return (1.0 / den**2)[:, None]
        if kind == "R":
            osc = np.ones((len(p), len(ws)))
            for j in range(d):
                osc *= np.cos(np.outer(p[:, j], ws[:, j]))
            return osc / den[:, None]
        return _one_minus_cos_product(p, ws) / den[:, None]

    if d == 1 and kind != "I2" and lam != 0 and _near_cut(lam):
        vals = np.array([_tensor_1d_adaptive(lam, int(w[0]), kind, quad) for w in ws])
        return vals.real.astype(float) if real else vals.astype(complex)
    vals, errs = _cube_integral(f, d, quad, freq)
    vals = _check(vals, errs, quad, f"tensor quadrature (d={d}, lambda={lam}, kind={kind})")
    return vals.real.astype(float) if real else vals.astype(complex)


def _near_cut(lam: complex) -> bool:
    return abs(lam.imag) < _NEAR_CUT and -2 - _NEAR_CUT < lam.real < _NEAR_CUT


def _tensor_1d_adaptive(lam: complex, k: int, kind: str, quad: QuadratureSpec) -> complex:
    """d = 1 Fourier integral near the spectrum, by adaptive quadrature with a
    breakpoint where lam + Phi comes closest to 0."""

    def f(p):
        den = lam + 2.0 * math.sin(0.5 * p) ** 2
        num = math.cos(k * p) if kind == "R" else 2.0 * math.sin(0.5 * k * p) ** 2
        return num / den

    points = None
    if -2 < lam.real < 0:
        points = [math.acos(1 + lam.real)]
    val, err = integrate.quad(
        f, 0.0, math.pi, points=points, complex_func=True, limit=2000, epsabs=0.1 * quad.abs_tol, epsrel=1e-13
    )
    err = abs(err)
    if err > quad.abs_tol * math.pi:
        raise QuadratureError(f"adaptive d=1 quadrature near the cut: error {err:.2e}", val / math.pi, err)
    return val / math.pi


def _reduced_batch(lam: complex, ws: np.ndarray, kind: str, quad: QuadratureSpec) -> np.ndarray:
    """Integrate the last axis in closed form; the remaining cube by tensor rules.

    With Phi = (c_1 + ... + c_d) / d and c_j = 1 - cos phi_j,
        pi^-1 int cos(k phi_d) / (lam + Phi) dphi_d = d r(b)^|k| / g(b),
    where b = d lam + c_1 + ... + c_{d-1}.
    """
    d = ws.shape[1]
    if kind == "I2":
        raise ValueError("the reduced route does not provide I'")
    # put the largest coordinate on the closed-form axis
    ws = np.sort(np.abs(ws), axis=1)
    last = ws[:, -1]
    rest = ws[:, :-1]
    real = lam.imag == 0 and lam.real >= 0
    if d == 1:
        b = complex(lam)
        g = _g(b)
        r = _ratio(b)
        out = np.array([r**k / g for k in last]) if kind == "R" else np.array([(1 - r**k) / g for k in last])
        return out.real if real else out

    def f(p):
        b = d * lam + 2.0 * np.sum(np.sin(0.5 * p) ** 2, axis=1)
        b = b.astype(complex)
        g = _g(b)
        r = _ratio(b)
        if kind == "R":
            osc = np.ones((len(p), len(ws)), dtype=complex)
            for j in range(d - 1):
                osc *= np.cos(np.outer(p[:, j], rest[:, j]))
            osc *= r[:, None] ** last[None, :]
            return d * osc / g[:, None]
        # 1 - c r^k = (1 - c) + c (1 - r^k), both pieces without cancellation
        one_c = _one_minus_cos_product(p, rest)
        one_r = -np.expm1(np.outer(np.log1p(b - g), last))
        return d * (one_c + (1.0 - one_c) * one_r) / g[:, None]

    if d == 2 and lam != 0 and lam.imag != 0 and _near_cut(lam):
        vals = np.array([_reduced_2d_adaptive(lam, w, kind, quad) for w in ws])
        return vals
    freq = float(rest.max()) if rest.size else 0.0
    vals, errs = _cube_integral(f, d - 1, quad, freq)
    vals = _check(vals, errs, quad, f"reduced quadrature (d={d}, lambda={lam}, kind={kind})")
    return vals.real if real else vals


def _reduced_2d_adaptive(lam: complex, w: np.ndarray, kind: str, quad: QuadratureSpec) -> complex:
    """d = 2 reduced integral near the cut, by adaptive quadrature with the
    near-singular angles (where b = 2 lam + c_1 crosses 0 or -2) as breakpoints."""
    k1, k2 = int(w[0]), int(w[1])

    def f(p):
        b = 2 * lam + 2.0 * math.sin(0.5 * p) ** 2
        g = cmath.sqrt(b) * cmath.sqrt(b + 2)
        r = 1 + b - g
        osc = math.cos(k1 * p) * r**k2
        return 2 * osc / g if kind == "R" else 2 * (1 - osc) / g

    points = []
    for target in (-2 * lam.real, -2 * lam.real - 2):  # c_1 = 1 - cos p
        if 0 < target < 2:
            points.append(math.acos(1 - target))
    val, err = integrate.quad(
        f, 0.0, math.pi, points=points or None, complex_func=True, limit=2000, epsabs=0.1 * quad.abs_tol, epsrel=1e-13
    )
    err = abs(err)
    if err > quad.abs_tol * math.pi:
        raise QuadratureError(f"adaptive d=2 quadrature near the cut: error {err:.2e}", val / math.pi, err)
    return val / math.pi


ROUTES = ("auto", "closed", "tensor", "reduced")


def _batch(lam: complex, ws: np.ndarray, d: int, kind: str, quad: QuadratureSpec, route: str) -> np.ndarray:
    if route not in ROUTES:
        raise ValueError(f"route must be one of {ROUTES}")
    ws = np.asarray(ws, dtype=np.int64).reshape(-1, d)
    if route == "auto":
        near_cut = lam.imag != 0 and _near_cut(lam)
        if d == 1:
            route = "closed" if lam != 0 and kind != "I2" else "tensor"
        elif kind == "I2":
            route = "tensor"
        elif near_cut and d == 3:
            raise QuadratureError(f"lambda={lam} is too close to the spectrum for d=3 quadrature")
        else:
            route = "reduced"
    if route == "closed":
        if d != 1:
            raise ValueError("the closed form exists only for d=1")
        return _reduced_batch(lam, ws, kind, quad)
    if route == "reduced":
        return _reduced_batch(lam, ws, kind, quad)
    return _tensor_batch(lam, ws, kind, quad)


@lru_cache(maxsize=65536)
def _cached(lam: complex, w: tuple, d: int, kind: str, quad: QuadratureSpec, route: str):
    return _batch(lam, np.array([w]), d, kind, quad, route)[0]


def _canon(w: Sequence[int]) -> tuple:
    # R and A depend on w only through the multiset {|w_j|}
    return tuple(sorted(abs(int(v)) for v in w))


# ---------------------------------------------------------------------------
# public operations


def free_diagonal_resolvent(
    lam: SpectralParam | complex, d: int, quad: QuadratureSpec | None = None, route: str = "auto"
) -> complex:
    """I(lambda) = R_lambda(0, 0). Infinite at lambda = 0 for d = 1, 2."""
    d = check_dimension(d)
    lam = _lam(lam)
    if lam == 0 and d <= 2:
        return complex(math.inf)
    return complex(_cached(lam, (0,) * d, d, "R", _quad(quad), route))


def free_resolvent(
    lam: SpectralParam | complex,
    x: Site | int,
    y: Site | int,
    d: int,
    quad: QuadratureSpec | None = None,
    route: str = "auto",
) -> complex:
    """R_lambda(x, y) = R_lambda(x - y, 0)."""
    d = check_dimension(d)
    lam = _lam(lam)
    w = np.subtract(as_site(x, d), as_site(y, d))
    if lam == 0 and d <= 2:
        return complex(math.inf)
    return complex(_cached(lam, _canon(w), d, "R", _quad(quad), route))


def free_resolvent_many(
    lam: SpectralParam | complex, ws: Iterable[Site], d: int, quad: QuadratureSpec | None = None, route: str = "auto"
) -> np.ndarray:
    """R_lambda(w, 0) for many sites in one quadrature pass."""
    d = check_dimension(d)
    lam = _lam(lam)
    return _many(lam, ws, d, "R", _quad(quad), route)


def a_function(
    lam: SpectralParam | complex, w: Site | int, d: int, quad: QuadratureSpec | None = None, route: str = "auto"
) -> complex:
    """A_lambda(w) = I(lambda) - R_lambda(w, 0), from the form that stays finite at lambda = 0."""
    d = check_dimension(d)
    lam = _lam(lam)
    w = _canon(as_site(w, d))
    if not any(w):
        return 0j
    if lam == 0 and route == "auto" and d == 1:
        # no closed-form shortcut at lambda = 0: integrate (1 - cos) / Phi
        route = "tensor"
    return complex(_cached(lam, w, d, "A", _quad(quad), route))


def a_function_many(
    lam: SpectralParam | complex, ws: Iterable[Site], d: int, quad: QuadratureSpec | None = None, route: str = "auto"
) -> np.ndarray:
    d = check_dimension(d)
    lam = _lam(lam)
    if lam == 0 and route == "auto":
        route = "tensor" if d == 1 else "auto"
    return _many(lam, ws, d, "A", _quad(quad), route)


def _many(lam, ws, d, kind, quad, route):
    sites = [_canon(as_site(w, d)) for w in ws]
    uniq = sorted(set(sites))
    if kind == "R" and lam == 0 and d <= 2:
        raise ValueError("R_0(w, 0) diverges for d <= 2; use A_0")
    table = {}
    todo = [w for w in uniq if not (kind == "A" and not any(w))]
    for w in uniq:
        if kind == "A" and not any(w):
            table[w] = 0.0
    if todo:
        vals = _batch(lam, np.array(todo), d, kind, quad, route)
        table.update(zip(todo, vals))
    return np.array([table[w] for w in sites])


def resolvent_derivative(lam: SpectralParam | complex, d: int, quad: QuadratureSpec | None = None) -> complex:
    """I'(lambda) = -pi^-d int (lambda + Phi)^-2."""
    d = check_dimension(d)
    lam = _lam(lam)
    if d == 1:
        g = _g(complex(lam))
        return complex(-(1 + lam) / g**3)
    if lam == 0:
        return complex(-math.inf)
    return -complex(_cached(lam, (0,) * d, d, "I2", _quad(quad), "tensor"))


def perturbed_resolvent(
    lam: SpectralParam | complex,
    beta: float,
    x: Site | int,
    y: Site | int,
    d: int,
    quad: QuadratureSpec | None = None,
) -> complex:
    """R^beta_lambda(x, y) = R(x, y) + beta R(x, 0) R(0, y) / (1 - beta I)."""
    d = check_dimension(d)
    lam = _lam(lam)
    beta = float(beta)
    if beta == 0:
        return free_resolvent(lam, x, y, d, quad)
    I = free_diagonal_resolvent(lam, d, quad)
    gap = 1 - beta * I
    if abs(gap) < POLE_THRESHOLD:
        raise PoleError(lam, beta, abs(gap))
    rx = free_resolvent(lam, x, 0 if d == 1 else (0,) * d, d, quad)
    ry = free_resolvent(lam, 0 if d == 1 else (0,) * d, y, d, quad)
    return free_resolvent(lam, x, y, d, quad) + beta * rx * ry / gap


def perturbed_diagonal(lam: SpectralParam | complex, beta: float, d: int, quad: QuadratureSpec | None = None) -> complex:
    """I^beta(lambda) = I / (1 - beta I)."""
    I = free_diagonal_resolvent(lam, d, quad)
    if math.isinf(abs(I)):
        return complex(-1.0 / beta) if beta != 0 else I
    gap = 1 - beta * I
    if abs(gap) < POLE_THRESHOLD:
        raise PoleError(_lam(lam), beta, abs(gap))
    return I / gap


def killed_resolvent(
    lam: SpectralParam | complex, x: Site | int, y: Site | int, d: int, quad: QuadratureSpec | None = None
) -> complex:
    """Resolvent of the walk killed on hitting 0.

    Written through A_lambda so the same expression is valid at lambda = 0 in
    every dimension:  A(x) + A(y) - A(x - y) - A(x) A(y) / I.
    """
    d = check_dimension(d)
    lam = _lam(lam)
    x = as_site(x, d)
    y = as_site(y, d)
    if not any(x) or not any(y):
        return 0j
    ax = a_function(lam, x, d, quad)
    ay = a_function(lam, y, d, quad)
    axy = a_function(lam, tuple(np.subtract(x, y)), d, quad)
    I = free_diagonal_resolvent(lam, d, quad)
    tail = 0 if math.isinf(abs(I)) else ax * ay / I
    return ax + ay - axy - tail


@lru_cache(maxsize=None)
def _beta_critical(d: int, quad: QuadratureSpec) -> float:
    if d <= 2:
        return 0.0
    return 1.0 / free_diagonal_resolvent(0.0, d, quad).real


def beta_critical(d: int, quad: QuadratureSpec | None = None) -> float:
    """beta_cr = 1 / I(0+): 0 in d = 1, 2; the escape probability of the walk in d = 3."""
    return _beta_critical(check_dimension(d), _quad(quad))


def hitting_probability(
    x: Site | int, d: int, quad: QuadratureSpec | None = None, route: str = "killed"
) -> float:
    """P_x(X hits 0). ``route='killed'`` sums the killed resolvent over the
    neighbours of 0 (each enters 0 at rate 1/2d); ``route='green'`` uses
    R_0(x, 0) / I(0). The two are independent evaluations."""
    d = check_dimension(d)
    x = as_site(x, d)
    if not any(x):
        return 1.0
    if d <= 2:
        return 1.0
    if route == "green":
        return float(free_resolvent(0.0, x, (0,) * d, d, quad).real / free_diagonal_resolvent(0.0, d, quad).real)
    if route != "killed":
        raise ValueError("route must be 'killed' or 'green'")
    total = 0.0
    for e in np.vstack([np.eye(d, dtype=int), -np.eye(d, dtype=int)]):
        total += killed_resolvent(0.0, x, tuple(e), d, quad).real
    return total / (2 * d)


# ---------------------------------------------------------------------------
# spectral measure of H_beta at the origin


def _neville_at_zero(eps: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Successive polynomial extrapolants to eps = 0 (Neville tableau diagonal)."""
    n = len(eps)
    col = vals.astype(complex)
    out = [col[0]]
    for k in range(1, n):
        col = (eps[k:] * col[:-1] - eps[: n - k] * col[1:]) / (eps[k:] - eps[: n - k])
        out.append(col[0])
    return np.array(out)


def spectral_density(
    beta: float,
    s: float,
    d: int,
    eps_schedule: Sequence[float] | None = None,
    quad: QuadratureSpec | None = None,
    method: str = "auto",
) -> float:
    """h_beta(s) = lim_{eps -> 0+} -(1/pi) Im I^beta(s + i eps), s in (-2, 0).

    d = 1 with ``method='auto'`` uses the closed-form boundary value of I;
    otherwise I^beta(s + i eps) is evaluated along ``eps_schedule`` and
    extrapolated to eps = 0.
    """
    d = check_dimension(d)
    if not -2 < s < 0:
        raise ValueError("s must lie strictly inside (-2, 0)")
    if method not in ("auto", "limit", "richardson"):
        raise ValueError("method must be 'auto', 'limit' or 'richardson'")
    if method == "limit" or (method == "auto" and d == 1):
        if d != 1:
            raise ValueError("the closed-form boundary value exists only for d=1")
        I = one_dim_boundary_value(s)
        return float(-(I / (1 - beta * I)).imag / math.pi)
    eps = np.asarray(eps_schedule if eps_schedule is not None else [0.04, 0.02, 0.01, 0.005, 0.0025], dtype=float)
    if len(eps) < 3 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps_schedule must be a decreasing positive sequence of length >= 3")
    vals = np.array([perturbed_diagonal(complex(s, e), beta, d, quad) for e in eps])
    ext = _neville_at_zero(eps, vals)
    h = -ext.imag / math.pi
    spread = abs(h[-1] - h[-2])
    tol = max(1e-6, 1e-3 * abs(h[-1]))
    if not np.isfinite(h[-1]) or spread > tol:
        raise ExtrapolationError(f"eps-extrapolation of h_beta({s}) did not settle: last two {h[-2]:.6g}, {h[-1]:.6g}")
    return float(h[-1])


@dataclass(frozen=True)
class SpectralAtom:
    location: float
    mass: float


def _real_diagonal(lam: float, d: int, quad: QuadratureSpec) -> float:
    """I(lambda) for real lambda >= 0."""
    if d == 1:
        return one_dim_resolvent(lam).real
    return free_diagonal_resolvent(lam, d, quad).real


def spectral_atoms(beta: float, d: int, quad: QuadratureSpec | None = None) -> list[SpectralAtom]:
    """Point masses of the spectral measure of H_beta at 0, off [-2, 0].

    An atom sits at every real root of beta I(lambda) = 1 outside [-2, 0], with
    mass equal to the residue of I^beta there, -1 / (beta^2 I'(lambda*)).
    The shift phi -> phi + (pi, ..., pi) maps Phi to 2 - Phi, so
    I(-2 - mu) = -I(mu): the atom of beta < 0 is the mirror image, about -1,
    of the atom of |beta| to the right of the spectrum, with the same mass.
    """
    d = check_dimension(d)
    quad = _quad(quad)
    beta = float(beta)
    if abs(beta) <= beta_critical(d, quad):
        return []
    mu = bisect_lambda(abs(beta), d, quad)
    mass = -1.0 / (beta**2 * resolvent_derivative(mu, d, quad).real)
    loc = mu if beta > 0 else -2.0 - mu
    return [SpectralAtom(float(loc), float(mass))]


def bisect_lambda(beta: float, d: int, quad: QuadratureSpec | None = None, rel_tol: float = 1e-13) -> float:
    """The root of beta I(lambda) = 1 in (0, beta], for beta > beta_cr.

    The bracket is valid because I(lambda) < 1 / lambda, so beta I(beta) < 1,
    while beta I(0+) > 1 above criticality. Stops on relative width, since
    the root is exponentially small for small beta in d = 2.
    """
    d = check_dimension(d)
    quad = _quad(quad)
    if beta <= beta_critical(d, quad):
        raise ValueError(f"beta={beta} is not supercritical in d={d}")
    lo, hi = 0.0, float(beta)
    if beta * _real_diagonal(hi, d, quad) >= 1:
        raise ArithmeticError("bisection bracket for lambda(beta) failed at the right end")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if beta * _real_diagonal(mid, d, quad) > 1:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def p00_from_spectrum(beta: float, d: int, t: float, nodes: int = 40, quad: QuadratureSpec | None = None) -> float:
    """p_beta(t, 0, 0) by Stieltjes inversion: int e^{s t} h_beta(s) ds plus atoms.

    The continuous part is int_0^2 e^{-u t} h_beta(-u) du; substituting u = v / t
    turns it into a Gauss-Laguerre integral in v (the range cut at 2t is
    exponentially negligible for t >> 1). In d = 1, h vanishes like sqrt(|s|)
    at the edge, so that factor goes into the weight.
    """
    d = check_dimension(d)
    if t <= 0:
        raise ValueError("t must be positive")
    alpha = 0.5 if d == 1 else 0.0
    x, w = special.roots_genlaguerre(nodes, alpha)
    keep = x < 2 * t
    vals = []
    for v in x[keep]:
        s = -v / t
        eps = abs(s) * np.array([0.04, 0.02, 0.01, 0.005, 0.0025]) if d > 1 else None
        vals.append(spectral_density(beta, s, d, eps_schedule=eps, quad=quad) / v**alpha)
    cont = float(np.dot(w[keep], vals)) / t
    atoms = sum(a.mass * math.exp(a.location * t) for a in spectral_atoms(beta, d, quad))
    return cont + atoms
