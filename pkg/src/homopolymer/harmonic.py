"""The positive eigenfunction psi_beta of H_beta = Delta + beta delta_0 and lambda(beta).

Subcritical and critical phases (beta <= beta_cr, lambda(beta) = 0):

    psi(x) = 1 - beta A_0(x).

In d = 3 this is the same function as 1 - (beta / beta_cr) P_x(tau_0 = inf),
because P_x(tau_0 = inf) = A_0(x) / I(0); both routes are exposed.

Supercritical phase: psi(x) = E_x exp(-lambda tau_0) = R_lambda(x, 0) / I(lambda)
with lambda = lambda(beta), evaluated by quadrature. A finite-box linear solve
is kept as an independent check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import resolvent as rs
from .lattice import Site, as_site, check_dimension

PHASES = ("subcritical", "critical", "supercritical")

# beta within this distance of beta_cr is reported as critical
CRITICAL_BAND = 1e-12


@dataclass(frozen=True)
class ModelParams:
    d: int
    beta: float
    beta_cr: float
    lambda_beta: float
    phase: str
    quad: rs.QuadratureSpec = field(default=rs.DEFAULT_QUAD, compare=True)

    def __post_init__(self):
        check_dimension(self.d)
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if self.lambda_beta < 0:
            raise ValueError("lambda_beta must be nonnegative")
        if (self.lambda_beta == 0) != (self.beta <= self.beta_cr + CRITICAL_BAND):
            raise ValueError("lambda_beta must vanish exactly when beta <= beta_cr")
        if self.lambda_beta > 0 and not self.lambda_beta < self.beta:
            raise ValueError("lambda(beta) < beta must hold in the supercritical phase")


def lambda_of_beta(beta: float, d: int, quad: rs.QuadratureSpec | None = None) -> float:
    """Exponential growth rate of Z_{beta,t}: 0 up to beta_cr, else the root of beta I(lambda) = 1."""
    d = check_dimension(d)
    beta = float(beta)
    if beta <= rs.beta_critical(d, quad) + CRITICAL_BAND:
        return 0.0
    return rs.bisect_lambda(beta, d, quad)


def model_params(d: int, beta: float, quad: rs.QuadratureSpec | None = None) -> ModelParams:
    quad = rs.DEFAULT_QUAD if quad is None else quad
    d = check_dimension(d)
    beta = float(beta)
    bcr = rs.beta_critical(d, quad)
    if abs(beta - bcr) <= CRITICAL_BAND:
        phase = "critical"
    elif beta < bcr:
        phase = "subcritical"
    else:
        phase = "supercritical"
    return ModelParams(d, beta, bcr, lambda_of_beta(beta, d, quad), phase, quad)


def _canon(x: Site) -> tuple:
    return tuple(sorted(abs(v) for v in x))


@lru_cache(maxsize=65536)
def _psi(params: ModelParams, x: tuple, route: str) -> float:
    d, beta, quad = params.d, params.beta, params.quad
    if not any(x):
        return 1.0
    if params.lambda_beta == 0:
        if route == "martin":
            if d == 1:
                return 1.0 - beta * x[0]
            return float(1.0 - beta * rs.a_function(0.0, x, d, quad).real)
        if route == "escape":
            if d < 3:
                raise ValueError("the escape-probability route needs a transient walk (d=3)")
            escape = 1.0 - rs.hitting_probability(x, d, quad, route="green")
            return 1.0 - beta / params.beta_cr * escape
        raise ValueError("route must be 'martin' or 'escape' below criticality")
    lam = params.lambda_beta
    if d == 1:
        return float(rs.one_dim_resolvent(lam, x[0]).real / rs.one_dim_resolvent(lam).real)
    return float(rs.free_resolvent(lam, x, (0,) * d, d, quad).real / rs.free_diagonal_resolvent(lam, d, quad).real)


def psi(params: ModelParams, x: Site | int, route: str = "martin") -> float:
    """psi_beta(x), normalised by psi_beta(0) = 1."""
    return _psi(params, _canon(as_site(x, params.d)), route)


def psi_grid(params: ModelParams, radius: int) -> np.ndarray:
    """psi_beta on the box [-radius, radius]^d, as a dense array of shape (2L+1,)*d."""
    d = params.d
    L = int(radius)
    if L < 0:
        raise ValueError("radius must be nonnegative")
    axis = np.arange(-L, L + 1)
    if d == 1:
        if params.lambda_beta == 0:
            return 1.0 - params.beta * np.abs(axis).astype(float)
        r = rs.one_dim_resolvent(params.lambda_beta, 1).real / rs.one_dim_resolvent(params.lambda_beta).real
        return r ** np.abs(axis)
    canon = sorted({tuple(sorted(c)) for c in itertools.combinations_with_replacement(range(L + 1), d)})
    if params.lambda_beta == 0:
        vals = 1.0 - params.beta * np.real(rs.a_function_many(0.0, canon, d, params.quad))
    else:
        lam = params.lambda_beta
        vals = np.real(rs.free_resolvent_many(lam, canon, d, params.quad))
        vals = vals / rs.free_diagonal_resolvent(lam, d, params.quad).real
    table = dict(zip(canon, vals))
    grids = np.meshgrid(*([np.abs(axis)] * d), indexing="ij")
    keys = np.sort(np.stack(grids, axis=-1), axis=-1).reshape(-1, d)
    out = np.array([table[tuple(k)] for k in keys])
    return out.reshape((2 * L + 1,) * d)


def apply_h(u: np.ndarray, beta: float, lam: float = 0.0) -> np.ndarray:
    """(Delta + beta delta_0 - lam) u on the interior of a centred box grid.

    ``u`` has shape (2L+1,)*d; the result has shape (2L-1,)*d.
    """
    d = u.ndim
    inner = tuple(slice(1, -1) for _ in range(d))
    centre = u[inner]
    acc = np.zeros_like(centre)
    for j in range(d):
        for shift in (0, 2):
            sl = [slice(1, -1)] * d
            sl[j] = slice(shift, shift + centre.shape[j])
            acc += u[tuple(sl)]
    out = acc / (2 * d) - centre - lam * centre
    mid = tuple(s // 2 for s in centre.shape)
    out[mid] += beta * centre[mid]
    return out


def harmonic_residual(params: ModelParams, radius: int) -> float:
    """max |(H_beta - lambda(beta)) psi| over the box [-radius, radius]^d."""
    u = psi_grid(params, int(radius) + 1)
    return float(np.max(np.abs(apply_h(u, params.beta, params.lambda_beta))))


def psi_box_solve(params: ModelParams, radius: int) -> np.ndarray:
    """Supercritical psi from the finite system (lambda - Delta) u = 0 off 0,
    u(0) = 1, u = 0 outside [-radius, radius]^d. Converges to psi as the box
    grows (psi decays exponentially); used to cross-check the quadrature route."""
    if params.lambda_beta <= 0:
        raise ValueError("the box solve is for the supercritical phase")
    d, L = params.d, int(radius)
    n = 2 * L + 1
    size = n**d
    lap = _box_laplacian(d, L)
    a = (params.lambda_beta * sp.identity(size, format="csr") - lap).tolil()
    centre = np.ravel_multi_index((L,) * d, (n,) * d)
    a.rows[centre] = [centre]
    a.data[centre] = [1.0]
    rhs = np.zeros(size)
    rhs[centre] = 1.0
    return spla.spsolve(a.tocsr(), rhs).reshape((n,) * d)


@dataclass(frozen=True)
class BoxSensitivity:
    site: Site
    radii: tuple[int, ...]
    box_values: tuple[float, ...]
    quadrature_value: float

    @property
    def rel_errors(self) -> tuple[float, ...]:
        return tuple(abs(v - self.quadrature_value) / self.quadrature_value for v in self.box_values)


def psi_box_sensitivity(params: ModelParams, x: Site | int, radii=(10, 20, 40)) -> BoxSensitivity:
    """psi(x) from box solves of growing radius against the quadrature value."""
    x = as_site(x, params.d)
    vals = []
    for L in radii:
        if max(abs(v) for v in x) >= L:
            raise ValueError("site must lie inside every box")
        u = psi_box_solve(params, L)
        vals.append(float(u[tuple(L + v for v in x)]))
    return BoxSensitivity(x, tuple(int(r) for r in radii), tuple(vals), psi(params, x))


def _box_laplacian(d: int, L: int) -> sp.csr_matrix:
    n = 2 * L + 1
    one = sp.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1], format="csr")
    eye = sp.identity(n, format="csr")
    adj = sp.csr_matrix((n**d, n**d))
    for j in range(d):
        factors = [one if k == j else eye for k in range(d)]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        adj = adj + term
    return (adj / (2 * d) - sp.identity(n**d)).tocsr()


def supercritical_ratio_d1(lam: float) -> float:
    """r = 1 + lam - sqrt(lam (lam + 2)): psi(x) = r^|x| in d = 1."""
    return 1 + lam - math.sqrt(lam * (lam + 2))
