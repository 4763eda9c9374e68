"""The Doob transform Q of the walk by psi_beta, and polymer sampling through it.

Q jumps x -> y (|y - x| = 1) at rate psi(y) / (2d psi(x)). Because psi solves
(H_beta - lambda) psi = 0, the total rate is 1 + lambda off the origin and
1 - beta + lambda at the origin.

The polymer measure at time t is recovered from Q started at 0 by the weight
1 / psi(X_t):  dP_{beta,t} = (1/psi(X_t)) dQ_0 / Z_{beta,t},
Z_{beta,t} = E^Q_0[1/psi(X_t)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import harmonic as hm
from . import kernel as kn
from .lattice import MCEstimate, Path, Site, as_site, origin, unit_steps
from .rng import REPLICA_BLOCK, replica_sizes, stream

ESS_FLOOR = 0.05

# stream tags keep the ensembles below statistically independent
_TAG_Q = 11
_TAG_RETURN = 12
_TAG_SINGLE = 13


class ESSError(RuntimeError):
    """Effective sample size fell below the configured floor."""


@dataclass(frozen=True)
class RateTable:
    site: Site
    neighbor_rates: dict

    def __post_init__(self):
        if any(not r > 0 for r in self.neighbor_rates.values()):
            raise ValueError("all jump rates must be positive")

    @property
    def total(self) -> float:
        return float(sum(self.neighbor_rates.values()))


def q_rates(params: hm.ModelParams, x: Site | int) -> RateTable:
    x = as_site(x, params.d)
    here = hm.psi(params, x)
    rates = {}
    for e in unit_steps(params.d):
        y = tuple(int(a + b) for a, b in zip(x, e))
        rates[tuple(int(v) for v in e)] = hm.psi(params, y) / (2 * params.d * here)
    return RateTable(x, rates)


# ---------------------------------------------------------------------------
# vectorised psi


class PsiField:
    """psi_beta evaluated on integer arrays of sites, shape (n, d) -> (n,).

    d = 1 uses the closed forms; otherwise a dense table on a centred box,
    doubled in radius whenever a walker gets near its edge.
    """

    def __init__(self, params: hm.ModelParams, radius: int = 16):
        self.params = params
        self.d = params.d
        self._radius = 0
        self._table = None
        if self.d > 1:
            self._grow(radius)

    def _grow(self, radius: int):
        self._table = hm.psi_grid(self.params, radius)
        self._radius = radius

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        p = self.params
        if self.d == 1:
            a = np.abs(x[..., 0]).astype(float)
            if p.lambda_beta == 0:
                return 1.0 - p.beta * a
            return hm.supercritical_ratio_d1(p.lambda_beta) ** a
        need = int(np.abs(x).max(initial=0))
        if need > self._radius:
            r = self._radius
            while r < need:
                r *= 2
            self._grow(r)
        idx = tuple((x[..., j] + self._radius) for j in range(self.d))
        return self._table[idx]


# ---------------------------------------------------------------------------
# simulation


def simulate_q(params: hm.ModelParams, start: Site | int, horizon: float, seed: int) -> Path:
    """One Q-path on [0, horizon]: exponential holding times at the total rate,
    next site chosen proportionally to the rates."""
    d = params.d
    x = np.array(as_site(start, d), dtype=np.int64)
    rng = stream(seed, _TAG_SINGLE)
    psi = PsiField(params)
    steps = unit_steps(d)
    times, sites = [], [x.copy()]
    t = 0.0
    while True:
        nb = x[None, :] + steps
        rates = psi(nb) / (2 * d * psi(x[None, :])[0])
        total = rates.sum()
        t += rng.exponential(1.0 / total)
        if t > horizon:
            break
        k = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        x = nb[min(k, 2 * d - 1)]
        times.append(t)
        sites.append(x.copy())
    return Path(np.array(times), np.array(sites), horizon)


@dataclass(frozen=True)
class QEnsemble:
    """Per-path summaries of independent Q-paths on [0, horizon]."""

    horizon: float
    start: Site
    endpoint: np.ndarray  # (n, d)
    occupation: np.ndarray  # time spent at 0
    last_zero: np.ndarray  # sup{s <= horizon: X_s = 0}, 0 if never
    returns: np.ndarray  # jumps into 0
    record_times: tuple[float, ...] = ()
    records: np.ndarray | None = field(default=None, repr=False)  # (n, len(record_times), d)

    @property
    def n(self) -> int:
        return len(self.endpoint)


def _simulate_block(params, psi, start, horizon, n, rng, record_times):
    d = params.d
    steps = unit_steps(d)
    x = np.tile(np.asarray(start, dtype=np.int64), (n, 1))
    t = np.zeros(n)
    occ = np.zeros(n)
    last = np.zeros(n)
    ret = np.zeros(n, dtype=np.int64)
    rec = np.zeros((n, len(record_times), d), dtype=np.int64) if record_times else None
    active = np.arange(n)
    while len(active):
        xa = x[active]
        here = psi(xa)
        nb = xa[:, None, :] + steps[None, :, :]
        rates = psi(nb.reshape(-1, d)).reshape(len(active), 2 * d) / (2 * d * here[:, None])
        total = rates.sum(axis=1)
        hold = rng.exponential(1.0, len(active)) / total
        t0 = t[active]
        t1 = np.minimum(t0 + hold, horizon)
        at0 = ~xa.any(axis=1)
        occ[active] += np.where(at0, t1 - t0, 0.0)
        last[active] = np.where(at0, t1, last[active])
        if rec is not None:
            for i, r in enumerate(record_times):
                hit = (t0 <= r) & (r < t0 + hold)
                if hit.any():
                    rec[active[hit], i] = xa[hit]
        done = t0 + hold > horizon
        u = rng.random(len(active)) * total
        k = np.minimum((np.cumsum(rates, axis=1) < u[:, None]).sum(axis=1), 2 * d - 1)
        moving = ~done
        new = nb[np.arange(len(active)), k]
        x[active[moving]] = new[moving]
        t[active[moving]] = t0[moving] + hold[moving]
        ret[active[moving]] += ~new[moving].any(axis=1)
        active = active[moving]
    if rec is not None:
        # a record time equal to the horizon sees the final position
        for i, r in enumerate(record_times):
            if r >= horizon:
                rec[:, i] = x
    return x, occ, last, ret, rec


def simulate_q_ensemble(
    params: hm.ModelParams,
    start: Site | int,
    horizon: float,
    n: int,
    seed: int,
    record_times: Sequence[float] = (),
) -> QEnsemble:
    """n independent Q-paths, simulated in replica blocks with derived streams."""
    d = params.d
    start = as_site(start, d)
    record_times = tuple(float(r) for r in record_times)
    if any(not 0 <= r <= horizon for r in record_times):
        raise ValueError("record times must lie in [0, horizon]")
    psi = PsiField(params)
    parts = []
    for r, size in enumerate(replica_sizes(n, REPLICA_BLOCK)):
        parts.append(_simulate_block(params, psi, start, horizon, size, stream(seed, _TAG_Q, r), record_times))
    if not parts:
        empty = np.zeros((0, d), dtype=np.int64)
        return QEnsemble(horizon, start, empty, np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), record_times)
    cols = list(zip(*parts))
    recs = np.concatenate(cols[4]) if record_times else None
    return QEnsemble(
        float(horizon),
        start,
        np.concatenate(cols[0]),
        np.concatenate(cols[1]),
        np.concatenate(cols[2]),
        np.concatenate(cols[3]),
        record_times,
        recs,
    )


# ---------------------------------------------------------------------------
# exact kernel of Q


def q_kernel(params: hm.ModelParams, box: kn.BoxSpec, t: float, x: Site | int | None = None) -> kn.KernelGrid:
    """q(t, x, y) = exp(-lambda t) psi(y) p_beta(t, x, y) / psi(x) on the box.

    The truncation bound controls the missing mass E_x[e^{beta J} psi(X_t); exit] / psi(x)
    by Cauchy-Schwarz, with psi(y) <= 1 + |beta| |y|_1 and E|X_t|_1^2 <= d t.
    """
    d = params.d
    x = origin(d) if x is None else as_site(x, d)
    p = kn.propagate(params.beta, box, t, x)
    psi = PsiField(params, box.radius)(box.coords()).reshape(box.shape)
    psi_x = hm.psi(params, x)
    q = math.exp(-params.lambda_beta * t) * psi * p.values / psi_x
    second = 2.0 + 2.0 * params.beta**2 * d * t
    bound = math.sqrt(second * p.truncation_error_bound) / psi_x
    return kn.KernelGrid(float(t), x, q, params.beta, bound, box)


# ---------------------------------------------------------------------------
# polymer sampling


@dataclass(frozen=True)
class WeightedEnsemble:
    paths: QEnsemble
    weights: np.ndarray  # self-normalised, sum to 1
    raw_weights: np.ndarray  # 1 / psi(X_t)
    ess: float

    @property
    def z_estimate(self) -> MCEstimate:
        """Unnormalised weight mean, an estimate of Z_{beta,t}."""
        w = self.raw_weights
        return MCEstimate(float(w.mean()), float(w.std(ddof=1) / math.sqrt(len(w))), len(w))

    def mean(self, values: np.ndarray) -> float:
        return _pairwise_sum(self.weights * np.asarray(values, dtype=float))


def _pairwise_sum(a: np.ndarray) -> float:
    # fixed-order reduction, independent of how the ensemble was produced
    a = np.asarray(a, dtype=float)
    while len(a) > 1:
        if len(a) % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0]) if len(a) else 0.0


def effective_sample_size(weights: np.ndarray) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.sum(w**2))


def sample_polymer(
    params: hm.ModelParams,
    t: float,
    n_paths: int,
    seed: int,
    record_times: Sequence[float] = (),
    ess_floor: float = ESS_FLOOR,
) -> WeightedEnsemble:
    """Polymer paths on [0, t]: Q_0 paths with self-normalised weights 1/psi(X_t)."""
    if not params.beta < 0 or params.d > 2:
        raise ValueError("polymer sampling is for beta < 0 in d = 1, 2")
    ens = simulate_q_ensemble(params, origin(params.d), t, n_paths, seed, record_times)
    raw = 1.0 / PsiField(params)(ens.endpoint)
    ess = effective_sample_size(raw)
    if ess < ess_floor * n_paths:
        raise ESSError(f"effective sample size {ess:.0f} is below {ess_floor:.0%} of {n_paths}")
    return WeightedEnsemble(ens, raw / raw.sum(), raw, ess)


# ---------------------------------------------------------------------------
# transience and coupling


@dataclass(frozen=True)
class ReturnReport:
    estimate: MCEstimate
    expected: float
    start: int
    escape_radius: int

    @property
    def z_score(self) -> float:
        se = self.estimate.stderr or 1e-300
        return (self.estimate.mean - self.expected) / se


def q_return_probability(params: hm.ModelParams, n: int, seed: int, escape_radius: int = 100, start: int = 1) -> ReturnReport:
    """d = 1: frequency with which Q from ``start`` hits 0 before |x| = escape_radius.

    Optional stopping for the martingale psi(X)/psi(x) under P gives the exact
    value (R - start) / (R psi(start)); as R -> inf it is 1/psi(start).
    """
    if params.d != 1 or params.lambda_beta != 0:
        raise ValueError("implemented for d = 1 below criticality")
    R = int(escape_radius)
    if not 0 < start < R:
        raise ValueError("need 0 < start < escape_radius")
    rng = stream(seed, _TAG_RETURN)
    b = abs(params.beta)
    x = np.full(n, start, dtype=np.int64)
    hits = 0
    while len(x):
        # embedded chain off 0: up with prob psi(x+1) / (2 psi(x))
        up = rng.random(len(x)) < (1 + b * (x + 1)) / (2 * (1 + b * x))
        x = x + np.where(up, 1, -1)
        hits += int((x == 0).sum())
        x = x[(x != 0) & (x < R)]
    p = hits / n
    expected = (R - start) / (R * (1 + b * start))
    return ReturnReport(MCEstimate(p, math.sqrt(p * (1 - p) / n), n), expected, start, R)


@dataclass(frozen=True)
class DominationRow:
    t: float
    a: int
    from_x: float
    from_zero: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.from_x >= self.from_zero - self.slack


@dataclass(frozen=True)
class DominationReport:
    x: int
    rows: tuple[DominationRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)


def coupling_domination_test(
    params: hm.ModelParams,
    x: int,
    t_grid: Sequence[float],
    n: int,
    seed: int,
    thresholds: Sequence[int] = (1, 2, 3, 5, 8),
    z: float = 3.0,
) -> DominationReport:
    """Q_x(|X_t| >= a) >= Q_0(|X_t| >= a) up to z standard errors (d = 1, x >= 0)."""
    if params.d != 1 or x < 0:
        raise ValueError("coupling test is for d = 1 and x >= 0")
    t_grid = tuple(float(t) for t in t_grid)
    horizon = max(t_grid)
    ex = simulate_q_ensemble(params, x, horizon, n, seed, t_grid)
    e0 = simulate_q_ensemble(params, 0, horizon, n, seed + 1, t_grid)
    rows = []
    for i, t in enumerate(t_grid):
        ax = np.abs(ex.records[:, i, 0])
        a0 = np.abs(e0.records[:, i, 0])
        for a in thresholds:
            px = float((ax >= a).mean())
            p0 = float((a0 >= a).mean())
            slack = z * math.sqrt(px * (1 - px) / n + p0 * (1 - p0) / n)
            rows.append(DominationRow(t, int(a), px, p0, slack))
    return DominationReport(int(x), tuple(rows))


def translation_bound_check(params: hm.ModelParams, x: Site | int, t: float, box: kn.BoxSpec) -> tuple[float, float]:
    """(Z_{beta,t}(x), psi(x) Z_{beta,t}); the first never exceeds the second."""
    zx = kn.partition_function(params.beta, box, t, x).value
    z0 = kn.partition_function(params.beta, box, t).value
    return zx, hm.psi(params, x) * z0
