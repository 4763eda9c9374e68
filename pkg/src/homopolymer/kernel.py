"""Feynman-Kac kernels p_beta(t, x, y) = E_x[exp(beta J(t)) ; X(t) = y] on a finite box.

The box [-L, L]^d is absorbing: mass that leaves it is lost, so for beta <= 0
every value is a lower bound for the infinite-lattice kernel and the deficit
is at most the free walk's probability of leaving the box, which is attached
to every result.

Time stepping is uniformization. For a generator G with nonnegative
off-diagonal part, pick c >= max row sum of G and mu >= max (c - G_ii); then
P = I + (G - c I) / mu is substochastic and

    exp(t G) = exp(c t) sum_k Pois(k; mu t) P^k.

For H_beta on the box this gives c = max(beta, 0) and mu = 1 + |beta|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import special, stats

from . import resolvent as rs
from .lattice import Site, as_site, check_dimension, origin

POISSON_TAIL = 1e-12

# Sparse rows, plus a handful of working vectors, per site.
_BYTES_PER_SITE = 8 * 8 + 12 * 7


class MemoryBudgetError(MemoryError):
    pass


class TruncationError(RuntimeError):
    """A requested accuracy is not met by the box or the Poisson truncation."""


@dataclass(frozen=True)
class BoxSpec:
    radius: int
    d: int
    boundary: str = "absorbing"
    memory_budget: int = 2 * 1024**3

    def __post_init__(self):
        check_dimension(self.d)
        if int(self.radius) != self.radius or self.radius < 10:
            raise ValueError("box radius must be an integer >= 10")
        if self.boundary != "absorbing":
            raise ValueError("only absorbing boxes are supported")
        if self.n_sites * _BYTES_PER_SITE > self.memory_budget:
            raise MemoryBudgetError(
                f"box of radius {self.radius} in d={self.d} needs ~{self.n_sites * _BYTES_PER_SITE / 2**20:.0f} MiB, "
                f"budget is {self.memory_budget / 2**20:.0f} MiB"
            )

    @classmethod
    def for_time(cls, t: float, d: int, **kw) -> "BoxSpec":
        """Default radius ceil(6 sqrt(t) + 10): six standard deviations of the walk."""
        return cls(int(math.ceil(6 * math.sqrt(max(t, 0.0)) + 10)), d, **kw)

    @property
    def width(self) -> int:
        return 2 * self.radius + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.width,) * self.d

    @property
    def n_sites(self) -> int:
        return self.width**self.d

    def contains(self, x: Site | int) -> bool:
        return all(abs(v) <= self.radius for v in as_site(x, self.d))

    def index(self, x: Site | int) -> int:
        x = as_site(x, self.d)
        if not self.contains(x):
            raise ValueError(f"site {x} is outside the box of radius {self.radius}")
        return int(np.ravel_multi_index(tuple(v + self.radius for v in x), self.shape))

    def coords(self) -> np.ndarray:
        """All sites, in flat-index order, shape (n_sites, d)."""
        axes = [np.arange(-self.radius, self.radius + 1)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)


@dataclass(frozen=True)
class KernelGrid:
    time: float
    source: Site
    values: np.ndarray
    beta: float
    truncation_error_bound: float
    box: BoxSpec = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.box.shape)
        if np.any(v < 0):
            raise ValueError("kernel values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def value(self, y: Site | int) -> float:
        return float(self.values.ravel()[self.box.index(y)])

    def total(self) -> float:
        return float(self.values.sum())


# ---------------------------------------------------------------------------
# generators


def box_generator(beta: float, box: BoxSpec) -> sp.csr_matrix:
    """H_beta = Delta + beta delta_0 on the absorbing box (symmetric)."""
    n, d = box.width, box.d
    one = sp.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr")
    eye = sp.identity(n, format="csr")
    adj = None
    for j in range(d):
        term = None
        for k in range(d):
            f = one if k == j else eye
            term = f if term is None else sp.kron(term, f, format="csr")
        adj = term if adj is None else adj + term
    g = (adj / (2 * d)).tolil()
    g.setdiag(-1.0)
    centre = box.index((0,) * d)
    g[centre, centre] = -1.0 + beta
    return g.tocsr()


@dataclass(frozen=True)
class Uniformization:
    shift: float
    rate: float
    step: sp.csr_matrix  # P^T: the forward step v -> v P acting on column vectors

    @classmethod
    def of(cls, gen: sp.spmatrix) -> "Uniformization":
        gen = sp.csr_matrix(gen)
        diag = gen.diagonal()
        off = gen - sp.diags(diag)
        if off.nnz and off.data.min() < 0:
            raise ValueError("generator has negative off-diagonal rates")
        row_off = np.asarray(off.sum(axis=1)).ravel()
        shift = max(0.0, float(np.max(row_off + diag)))
        rate = float(np.max(shift - diag))
        if rate <= 0:
            rate = 1.0
        step = sp.identity(gen.shape[0], format="csr") + (gen - shift * sp.identity(gen.shape[0])) / rate
        return cls(shift, rate, sp.csr_matrix(step.T))


def _poisson_cutoff(mean: float, tol: float) -> int:
    if mean == 0:
        return 0
    return int(stats.poisson.isf(tol, mean)) + 2


def _weights(times: np.ndarray, rate: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    return stats.poisson.pmf(k[None, :], rate * times[:, None])


def evolve(gen: sp.spmatrix, v0: np.ndarray, times: Sequence[float], tol: float = POISSON_TAIL, reduce=None):
    """Row vector v0 exp(t G) for each t (uniformization).

    With ``reduce`` (a function v -> array of scalars) only those summaries are
    accumulated, which lets many times share one pass without storing vectors.
    Returns (results, truncation) where truncation bounds the Poisson tail
    dropped at each time (already multiplied by exp(shift t) |v0|_1).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    u = Uniformization.of(gen)
    kmax = _poisson_cutoff(u.rate * float(times.max(initial=0.0)), tol)
    w = _weights(times, u.rate, kmax)
    growth = np.exp(u.shift * times)
    mass = float(np.abs(v0).sum())
    tail = np.clip(1.0 - w.sum(axis=1), 0.0, None) + tol
    trunc = growth * tail * mass
    v = np.array(v0, dtype=float)
    if reduce is None:
        acc = np.zeros((len(times), len(v)))
        for k in range(kmax + 1):
            acc += w[:, k, None] * v[None, :]
            v = u.step @ v
        return acc * growth[:, None], trunc
    first = np.atleast_1d(reduce(v))
    series = np.zeros((kmax + 1, len(first)))
    series[0] = first
    for k in range(1, kmax + 1):
        v = u.step @ v
        series[k] = reduce(v)
    return (w @ series) * growth[:, None], trunc


def evolve_rk4(gen: sp.spmatrix, v0: np.ndarray, t: float, dt: float | None = None) -> np.ndarray:
    """Classical 4th-order Runge-Kutta for dv/dt = G^T v; a cross-check for ``evolve``."""
    gt = sp.csr_matrix(gen).T.tocsr()
    if dt is None:
        dt = 0.05
    n = max(1, int(math.ceil(t / dt)))
    h = t / n
    v = np.array(v0, dtype=float)
    for _ in range(n):
        k1 = gt @ v
        k2 = gt @ (v + 0.5 * h * k1)
        k3 = gt @ (v + 0.5 * h * k2)
        k4 = gt @ (v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


# ---------------------------------------------------------------------------
# box exit bound


def _skellam_upper_tail(a: int, m: float) -> float:
    """P(Y >= a) for Y a symmetric Skellam variable with variance m (difference
    of two Poisson(m/2)), via P(Y = k) = exp(-m) I_k(m)."""
    if a <= 0:
        return 1.0
    if m == 0:
        return 0.0
    total = 0.0
    k = a
    while True:
        term = float(special.ive(k, m))
        total += term
        if term < 1e-18 * max(total, 1e-300) or term == 0.0 or k > a + 100000:
            break
        k += 1
    return min(1.0, total)


def exit_probability_bound(box: BoxSpec, t: float, source: Site | int) -> float:
    """Upper bound on P(the free walk from ``source`` leaves the box by time t).

    Each coordinate is an independent rate-1/d walk, a symmetric Skellam process.
    By reflection P(max_{s<=t} Y_s >= a) <= 2 P(Y_t >= a); a union bound over the
    2d faces finishes the estimate.
    """
    source = as_site(source, box.d)
    m = t / box.d
    bound = 0.0
    for s in source:
        for a in (box.radius + 1 - s, box.radius + 1 + s):
            bound += 2 * _skellam_upper_tail(a, m)
    return min(1.0, bound)


def _truncation(beta: float, box: BoxSpec, t: float, source: Site, poisson_tail: float) -> float:
    return exit_probability_bound(box, t, source) * math.exp(max(beta, 0.0) * t) + poisson_tail


# ---------------------------------------------------------------------------
# public operations


def propagate(
    beta: float, box: BoxSpec, t: float, source: Site | int, method: str = "uniformization", tol: float = POISSON_TAIL
) -> KernelGrid:
    """p_beta(t, source, .) on the box."""
    source = as_site(source, box.d)
    if t < 0:
        raise ValueError("t must be nonnegative")
    gen = box_generator(beta, box)
    v0 = np.zeros(box.n_sites)
    v0[box.index(source)] = 1.0
    if method == "uniformization":
        vals, trunc = evolve(gen, v0, [t], tol)
        vals, ptail = vals[0], float(trunc[0])
    elif method == "rk4":
        vals, ptail = evolve_rk4(gen, v0, t), 0.0
    else:
        raise ValueError("method must be 'uniformization' or 'rk4'")
    vals = np.clip(vals, 0.0, None)
    return KernelGrid(float(t), source, vals, float(beta), _truncation(beta, box, t, source, ptail), box)


def propagate_times(beta: float, box: BoxSpec, times: Sequence[float], source: Site | int) -> list[KernelGrid]:
    """Kernels at several times from one uniformization pass."""
    source = as_site(source, box.d)
    gen = box_generator(beta, box)
    v0 = np.zeros(box.n_sites)
    v0[box.index(source)] = 1.0
    vals, trunc = evolve(gen, v0, times)
    return [
        KernelGrid(float(t), source, np.clip(v, 0, None), float(beta), _truncation(beta, box, t, source, float(e)), box)
        for t, v, e in zip(times, vals, trunc)
    ]


@dataclass(frozen=True)
class KernelSeries:
    """Z_{beta,t}(source) and p_beta(t, source, target) on a time grid."""

    times: np.ndarray
    partition: np.ndarray
    at_target: np.ndarray
    truncation_bound: np.ndarray
    source: Site
    target: Site
    beta: float


def kernel_series(
    beta: float, box: BoxSpec, times: Sequence[float], source: Site | int | None = None, target: Site | int | None = None
) -> KernelSeries:
    source = origin(box.d) if source is None else as_site(source, box.d)
    target = origin(box.d) if target is None else as_site(target, box.d)
    times = np.asarray(times, dtype=float)
    gen = box_generator(beta, box)
    v0 = np.zeros(box.n_sites)
    v0[box.index(source)] = 1.0
    it = box.index(target)
    out, trunc = evolve(gen, v0, times, reduce=lambda v: (v.sum(), v[it]))
    bound = np.array([_truncation(beta, box, t, source, e) for t, e in zip(times, trunc)])
    return KernelSeries(times, out[:, 0], out[:, 1], bound, source, target, float(beta))


@dataclass(frozen=True)
class PartitionValue:
    value: float
    truncation_bound: float


def partition_function(beta: float, box: BoxSpec, t: float, start: Site | int | None = None) -> PartitionValue:
    """Z_{beta,t}(start) = sum_y p_beta(t, start, y) over the box."""
    s = kernel_series(beta, box, [t], start, start)
    return PartitionValue(float(s.partition[0]), float(s.truncation_bound[0]))


# ---------------------------------------------------------------------------
# Laplace-domain consistency


@dataclass(frozen=True)
class LaplaceReport:
    beta: float
    d: int
    lambdas: tuple[float, ...]
    numeric: tuple[float, ...]
    exact: tuple[float, ...]
    rel_errors: tuple[float, ...]
    horizon: float
    tail_bounds: tuple[float, ...]

    @property
    def max_rel_error(self) -> float:
        return max(self.rel_errors)


def _gl_panels(a: float, b: float, width: float, nodes: int = 10):
    x, w = np.polynomial.legendre.leggauss(nodes)
    panels = max(1, int(math.ceil((b - a) / width)))
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def partition_laplace_check(
    beta: float,
    d: int,
    lambdas: Sequence[float],
    box: BoxSpec | None = None,
    horizon: float | None = None,
    quad: rs.QuadratureSpec | None = None,
) -> LaplaceReport:
    """int_0^inf exp(-lambda t) Z_{beta,t} dt (time quadrature of the kernel)
    against 1 / (lambda (1 - beta I(lambda))) (resolvent quadrature)."""
    d = check_dimension(d)
    lambdas = tuple(float(l) for l in lambdas)
    if min(lambdas) <= 0:
        raise ValueError("lambda grid must be positive")
    lam_min = min(lambdas)
    if horizon is None:
        horizon = math.log(1e8) / lam_min
    if math.exp(-lam_min * horizon) > 1e-8 * 1.0000001:
        raise ValueError("horizon too short: need exp(-lambda horizon) <= 1e-8")
    box = BoxSpec.for_time(horizon, d) if box is None else box
    pts, wts = _gl_panels(0.0, horizon, 2.0)
    series = kernel_series(beta, box, np.concatenate([pts, [horizon]]))
    z = series.partition[:-1]
    z_end = series.partition[-1]
    numeric, exact, errs, tails = [], [], [], []
    for lam in lambdas:
        body = float(np.sum(wts * np.exp(-lam * pts) * z))
        # Z is monotone in t, so the remainder lies between 0 and Z_H e^{-lam H}/lam (beta <= 0)
        tail = z_end * math.exp(-lam * horizon) / lam if beta <= 0 else float("nan")
        val = body + (0.5 * tail if beta <= 0 else 0.0)
        ref = float(np.real(1.0 / (lam * (1 - beta * rs.free_diagonal_resolvent(lam, d, quad)))))
        numeric.append(val)
        exact.append(ref)
        errs.append(abs(val - ref) / abs(ref))
        tails.append(tail)
    return LaplaceReport(float(beta), d, lambdas, tuple(numeric), tuple(exact), tuple(errs), float(horizon), tuple(tails))


# ---------------------------------------------------------------------------
# return-probability asymptotics


def p00_asymptote(beta: float, d: int, t: np.ndarray | float) -> np.ndarray | float:
    """Large-t behaviour of p_beta(t, 0, 0) for beta < 0 in d = 1, 2."""
    t = np.asarray(t, dtype=float)
    if beta >= 0:
        raise ValueError("the asymptote is for beta < 0")
    if d == 1:
        return 1.0 / (math.sqrt(2 * math.pi) * beta**2 * t**1.5)
    if d == 2:
        return math.pi / (beta**2 * t * np.log(t) ** 2)
    raise ValueError("asymptote available for d = 1, 2")


@dataclass(frozen=True)
class AsymptoteReport:
    beta: float
    d: int
    times: tuple[float, ...]
    p00: tuple[float, ...]
    ratios: tuple[float, ...]
    truncation_bounds: tuple[float, ...]

    @property
    def approaching(self) -> bool:
        """Is the last ratio closer to 1 than the first?"""
        return abs(self.ratios[-1] - 1) < abs(self.ratios[0] - 1)


def p00_asymptote_check(
    beta: float, d: int, t_grid: Sequence[float], box: BoxSpec | None = None, max_bound: float = 1e-3
) -> AsymptoteReport:
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    box = BoxSpec.for_time(float(t_grid[-1]), d) if box is None else box
    s = kernel_series(beta, box, t_grid)
    ratios = s.at_target / p00_asymptote(beta, d, t_grid)
    rel_bound = s.truncation_bound / s.at_target
    if np.max(rel_bound) > max_bound:
        raise TruncationError(f"box truncation bound relative to p00 is {np.max(rel_bound):.2e} > {max_bound:.1e}")
    return AsymptoteReport(
        float(beta), d, tuple(t_grid), tuple(s.at_target), tuple(ratios), tuple(s.truncation_bound)
    )


# ---------------------------------------------------------------------------
# the time-domain kernel behind A_0


def _cos_factor(t: float, k: int, d: int) -> float:
    """pi^-1 int_0^pi exp(-(t/d)(1 - cos phi)) cos(k phi) dphi by Gauss-Legendre."""
    m = t / d
    # the integrand is concentrated in phi <~ 1/sqrt(m); resolve both that and cos(k phi)
    n = int(min(4000, 40 + 2 * abs(k) + 4 * math.sqrt(m)))
    n = 16 * -(-n // 16)  # round up so the node cache is reused
    cut = min(math.pi, 40.0 / math.sqrt(m)) if m > 100 else math.pi
    x, w = rs._gl(n)
    phi = 0.5 * cut * (x + 1)
    vals = np.exp(-2 * m * np.sin(0.5 * phi) ** 2) * np.cos(k * phi)
    return float(0.5 * cut * (w @ vals) / math.pi)


def tilde_psi(t: float, w: Site | int, d: int) -> float:
    """psi~_t(w) = pi^-d int exp(-Phi t)(1 - cos<phi, w>) = p_t(0) - p_t(w) for the free walk."""
    d = check_dimension(d)
    if t < 0:
        raise ValueError("t must be nonnegative")
    w = as_site(w, d)
    if not any(w):
        return 0.0
    zero = math.prod(_cos_factor(t, 0, d) for _ in range(d))
    at_w = math.prod(_cos_factor(t, k, d) for k in w)
    return max(0.0, zero - at_w)


@dataclass(frozen=True)
class A0Report:
    w: Site
    integral: float
    tail: float
    a0: float
    rel_error: float


def a0_integral_check(w: Site | int, d: int = 1, horizon: float = 1e4, quad: rs.QuadratureSpec | None = None) -> A0Report:
    """int_0^inf psi~_t(w) dt against A_0(w); the part beyond ``horizon`` uses the
    local-CLT tail (d/2pi)^{d/2} |w|^2 T^{-d/2}."""
    d = check_dimension(d)
    w = as_site(w, d)
    edges = np.concatenate([[0.0], np.geomspace(0.5, horizon, 60)])
    x, wt = np.polynomial.legendre.leggauss(12)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        pts = 0.5 * (a + b) + 0.5 * (b - a) * x
        total += 0.5 * (b - a) * sum(wi * tilde_psi(p, w, d) for wi, p in zip(wt, pts))
    w2 = float(np.dot(w, w))
    tail = (d / (2 * math.pi)) ** (d / 2) * w2 * horizon ** (-d / 2)
    a0 = float(rs.a_function(0.0, w, d, quad).real)
    val = total + tail
    return A0Report(w, val, tail, a0, abs(val - a0) / a0 if a0 else abs(val))
