"""Wetting model: the walk on Z+ = {0, 1, ...} rewarded by exp(beta' occupation at 0).

Generator on Z+:
  (H f)(0) = f(1)/2 + (beta' - 1) f(0)
  (H f)(x) = (f(x+1) + f(x-1))/2 - f(x),  x > 0
so jumps from 0 towards -1 are killed. With beta = 2 beta' - 1 the function
phi(x) = 1 + (1 - 2 beta') x is harmonic, and in the scaling limit the wetting
polymer is |polymer| with that beta.

The generator of |X| for the full-line walk at 0 is f(1) - f(0) + beta f(0),
exactly twice the wetting row at 0; away from 0 the two agree. The laws therefore
coincide only after a time change at 0, which ``at_zero="doubled"`` reproduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import doob
from . import harmonic as hm
from . import kernel as kn
from . import limits as lm
from .rng import REPLICA_BLOCK, replica_sizes, stream

AT_ZERO = ("standard", "doubled")

_TAG_REFLECTED = 31
_TAG_KILLED = 32


@dataclass(frozen=True)
class WettingParams:
    beta_prime: float

    def __post_init__(self):
        if not math.isfinite(self.beta_prime):
            raise ValueError("beta_prime must be finite")

    @property
    def beta(self) -> float:
        return 2.0 * self.beta_prime - 1.0

    @property
    def phase(self) -> str:
        if self.beta_prime < 0.5:
            return "subcritical"
        return "critical" if self.beta_prime == 0.5 else "supercritical"


@dataclass(frozen=True)
class HalfLineBox:
    """Sites 0..length; the walk is killed on leaving through length + 1."""

    length: int

    def __post_init__(self):
        if int(self.length) != self.length or self.length < 10:
            raise ValueError("half-line box length must be an integer >= 10")

    @classmethod
    def for_time(cls, t: float) -> "HalfLineBox":
        return cls(int(math.ceil(6 * math.sqrt(max(t, 0.0)) + 10)))

    @property
    def n_sites(self) -> int:
        return self.length + 1


def wetting_generator(params: WettingParams, box: HalfLineBox, at_zero: str = "standard") -> sp.csr_matrix:
    if at_zero not in AT_ZERO:
        raise ValueError(f"at_zero must be one of {AT_ZERO}")
    n = box.n_sites
    main = -np.ones(n)
    up = np.full(n - 1, 0.5)
    down = np.full(n - 1, 0.5)
    main[0] = params.beta_prime - 1.0
    if at_zero == "doubled":
        main[0] *= 2
        up[0] *= 2
    return sp.diags([main, up, down], [0, 1, -1], format="csr")


@dataclass(frozen=True)
class WettingGrid:
    time: float
    source: int
    values: np.ndarray
    beta_prime: float
    truncation_error_bound: float

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if np.any(v < 0):
            raise ValueError("kernel values must be nonnegative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def total(self) -> float:
        return float(self.values.sum())


def _exit_bound(box: HalfLineBox, t: float, x: int, beta_prime: float) -> float:
    # killed paths only lose mass, so the free walk's reflection bound applies
    return min(1.0, 2 * kn._skellam_upper_tail(box.length + 1 - x, t)) * math.exp(max(beta_prime, 0.0) * t)


def wetting_kernel(params: WettingParams, box: HalfLineBox, t: float, x: int, at_zero: str = "standard") -> WettingGrid:
    """p~(t, x, .) = E_x[exp(beta' J(t)) 1{X stays in Z+} delta_.(X_t)] on the box."""
    x = int(x)
    if not 0 <= x <= box.length:
        raise ValueError("source must lie in the half-line box")
    if t < 0:
        raise ValueError("t must be nonnegative")
    v0 = np.zeros(box.n_sites)
    v0[x] = 1.0
    vals, trunc = kn.evolve(wetting_generator(params, box, at_zero), v0, [t])
    bound = _exit_bound(box, t, x, params.beta_prime) + float(trunc[0])
    return WettingGrid(float(t), x, np.clip(vals[0], 0.0, None), float(params.beta_prime), bound)


def polymer_abs_pmf(beta: float, t: float, length: int) -> tuple[np.ndarray, float]:
    """Normalised law of |X_t| under the polymer measure, on 0..length, and Z_{beta,t}."""
    box = kn.BoxSpec(length, 1)
    p = kn.propagate(beta, box, t, 0).values
    z = float(p.sum())
    folded = np.zeros(length + 1)
    folded[0] = p[length]
    folded[1:] = p[length + 1 :] + p[length - 1 :: -1]
    return folded / z, z


def _occupation_moments(logz: Callable[[float], float], b: float, h: float = 1e-3) -> tuple[float, float]:
    """First two moments of the occupation time from derivatives of log Z in the reward."""
    f = {k: logz(b + k * h) for k in (-2, -1, 0, 1, 2)}
    d1 = (f[-2] - 8 * f[-1] + 8 * f[1] - f[2]) / (12 * h)
    d2 = (-f[-2] + 16 * f[-1] - 30 * f[0] + 16 * f[1] - f[2]) / (12 * h * h)
    return d1, d2 + d1 * d1


@dataclass(frozen=True)
class IdentityReport:
    beta_prime: float
    t: float
    at_zero: str
    pmf_error: float
    moment_errors: tuple[float, float]
    wetting_moments: tuple[float, float]
    polymer_moments: tuple[float, float]
    truncation: float
    pmf_tol: float = 1e-8
    moment_tol: float = 1e-6
    details: dict = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.pmf_error <= self.pmf_tol and max(self.moment_errors) <= self.moment_tol


def wetting_identity_check(
    params: WettingParams, t: float, length: int | None = None, at_zero: str = "standard", pmf_tol: float = 1e-8, moment_tol: float = 1e-6
) -> IdentityReport:
    """Normalised wetting endpoint law and occupation moments against |X_t| under the
    polymer with beta = 2 beta' - 1, both from exact kernels on matched boxes."""
    if not params.beta_prime < 0.5:
        raise ValueError("the identity is stated for beta' < 1/2")
    box = HalfLineBox.for_time(t) if length is None else HalfLineBox(length)
    wk = wetting_kernel(params, box, t, 0, at_zero)
    wet = wk.values / wk.total()
    pol, _ = polymer_abs_pmf(params.beta, t, box.length)
    err = float(np.max(np.abs(wet - pol)))

    def log_zw(bp):
        return math.log(wetting_kernel(WettingParams(bp), box, t, 0, at_zero).total())

    def log_zp(b):
        return math.log(kn.partition_function(b, kn.BoxSpec(box.length, 1), t).value)

    mw = _occupation_moments(log_zw, params.beta_prime)
    mp = _occupation_moments(log_zp, params.beta)
    if at_zero == "doubled":
        # time at 0 runs twice as fast in the doubled chain
        mw = (mw[0] / 2, mw[1] / 4)
    merr = (abs(mw[0] - mp[0]), abs(mw[1] - mp[1]))
    return IdentityReport(params.beta_prime, float(t), at_zero, err, merr, mw, mp, wk.truncation_error_bound, pmf_tol, moment_tol)


def phi(params: WettingParams, x) -> np.ndarray:
    return 1.0 + (1.0 - 2.0 * params.beta_prime) * np.asarray(x, dtype=float)


def phi_residual(params: WettingParams, length: int = 50) -> float:
    """max |H phi| on 0..length-1, away from the artificial box edge."""
    box = HalfLineBox(length)
    g = wetting_generator(params, box)
    r = g @ phi(params, np.arange(box.n_sites))
    return float(np.max(np.abs(r[:-1])))


# ---------------------------------------------------------------------------
# simulation


def _uniformized_endpoints(rng, start: np.ndarray, horizon: float, kill_at_zero: bool):
    """Rate-1 uniformization on Z+: from x > 0 step +-1, from 0 step to 1 with
    probability 1/2; otherwise stay (reflected) or die (killed)."""
    x = start.copy()
    alive = np.ones(len(x), dtype=bool)
    jumps = rng.poisson(horizon, len(x))
    for k in range(int(jumps.max(initial=0))):
        act = alive & (jumps > k)
        if not act.any():
            break
        up = rng.random(len(x)) < 0.5
        at0 = x == 0
        step = np.where(up, 1, np.where(at0, 0, -1))
        x = np.where(act, x + step, x)
        if kill_at_zero:
            alive &= ~(act & at0 & ~up)
    return x, alive


def reflected_endpoints(n_time: float, n_paths: int, seed: int, start: int = 0) -> np.ndarray:
    """X_t of the walk reflected at 0 (beta' = 1/2)."""
    out = []
    for r, size in enumerate(replica_sizes(n_paths, REPLICA_BLOCK)):
        x, _ = _uniformized_endpoints(stream(seed, _TAG_REFLECTED, r), np.full(size, start, dtype=np.int64), n_time, False)
        out.append(x)
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def killed_endpoints(n_time: float, n_paths: int, seed: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints and survival indicators for beta' = 0: the free walk killed on stepping below 0."""
    xs, alive = [], []
    for r, size in enumerate(replica_sizes(n_paths, REPLICA_BLOCK)):
        x, a = _uniformized_endpoints(stream(seed, _TAG_KILLED, r), np.full(size, start, dtype=np.int64), n_time, True)
        xs.append(x)
        alive.append(a)
    return np.concatenate(xs), np.concatenate(alive)


def reflected_scaling_test(
    n_time: float, n_paths: int, seed: int, beta_prime: float = 0.5, threshold: float | None = None
) -> lm.KSReport:
    """beta' = 1/2: X_n / sqrt(n) of the reflected walk against |N(0,1)|.
    beta' < 1/2: |X_n| / sqrt(n) under the polymer with beta = 2 beta' - 1 against the meander endpoint."""
    params = WettingParams(beta_prime)
    if params.beta_prime > 0.5:
        raise ValueError("no limit law is claimed for beta' > 1/2")
    if n_time == 0:
        x = reflected_endpoints(0.0, n_paths, seed)
        return lm.KSReport("reflected", 0.0 if not x.any() else 1.0, n_paths, 0.0, details={"point_mass_at_0": bool(not x.any())})
    if params.beta_prime == 0.5:
        x = reflected_endpoints(n_time, n_paths, seed) / math.sqrt(n_time)
        threshold = 0.02 if threshold is None else threshold
        return lm.KSReport("reflected", lm.ks_statistic(x, lm.half_normal_law()), n_paths, threshold)
    mp = hm.model_params(1, params.beta)
    ens = doob.sample_polymer(mp, n_time, n_paths, seed)
    x = np.abs(ens.paths.endpoint[:, 0]) / math.sqrt(n_time)
    rayleigh = lm.ReferenceLaw("half_normal", ("rayleigh",), lambda r: np.where(r < 0, 0.0, -np.expm1(-0.5 * np.clip(r, 0, None) ** 2)), (0.0, 40.0))
    threshold = 0.04 if threshold is None else threshold
    return lm.KSReport("wetting_meander", lm.ks_statistic(x, rayleigh, ens.weights), n_paths, threshold, ess=ens.ess)
