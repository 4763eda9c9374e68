"""Continuous-time nearest-neighbour walk on Z^d and exact path functionals.

Paths are stored sparsely (jump times plus visited sites), never on a time
grid, so every functional below is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .rng import stream

DIMENSIONS = (1, 2, 3)

Site = tuple[int, ...]


def check_dimension(d: int) -> int:
    if d not in DIMENSIONS:
        raise ValueError(f"dimension must be one of {DIMENSIONS}, got {d!r}")
    return int(d)


def as_site(x: int | Sequence[int] | np.ndarray, d: int | None = None) -> Site:
    """Normalise ``x`` (an int in one dimension, or a sequence) to a tuple site."""
    if np.ndim(x) == 0:
        site = (int(x),)
    else:
        site = tuple(int(v) for v in np.asarray(x).ravel())
    if d is not None and len(site) != d:
        raise ValueError(f"site {site} does not have dimension {d}")
    check_dimension(len(site))
    return site


def origin(d: int) -> Site:
    return (0,) * check_dimension(d)


def unit_steps(d: int) -> np.ndarray:
    """The 2d unit steps, ordered +e1, -e1, +e2, -e2, ..."""
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for j in range(d):
        steps[2 * j, j] = 1
        steps[2 * j + 1, j] = -1
    return steps


@dataclass(frozen=True)
class Path:
    """A cadlag lattice trajectory on ``[0, horizon]``.

    ``sites[i]`` is occupied on ``[jump_times[i-1], jump_times[i])`` (with
    ``jump_times[-1]`` read as 0 and the final sojourn running to ``horizon``).
    """

    jump_times: np.ndarray
    sites: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.array(self.jump_times, dtype=float).ravel()
        sites = np.array(self.sites, dtype=np.int64)
        if sites.ndim == 1:
            sites = sites[:, None]
        check_dimension(sites.shape[1])
        horizon = float(self.horizon)
        if not horizon >= 0:
            raise ValueError("horizon must be nonnegative")
        if len(sites) != len(times) + 1:
            raise ValueError("need exactly one more site than jump times")
        if len(times):
            if times[0] < 0 or times[-1] > horizon:
                raise ValueError("jump times must lie in [0, horizon]")
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing")
            if np.any(np.abs(np.diff(sites, axis=0)).sum(axis=1) != 1):
                raise ValueError("consecutive sites must differ by one unit step")
        times.setflags(write=False)
        sites.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "horizon", horizon)

    @property
    def d(self) -> int:
        return self.sites.shape[1]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def start(self) -> Site:
        return as_site(self.sites[0])

    @property
    def end(self) -> Site:
        return as_site(self.sites[-1])

    def position(self, s: float | np.ndarray) -> np.ndarray:
        """X(s) for scalar or array ``s`` in ``[0, horizon]`` (right continuous)."""
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s > self.horizon):
            raise ValueError("evaluation times must lie in [0, horizon]")
        idx = np.searchsorted(self.jump_times, s, side="right")
        return self.sites[idx]

    def restrict(self, horizon: float) -> "Path":
        """The same path observed only up to ``horizon``."""
        if not 0 <= horizon <= self.horizon:
            raise ValueError("restriction horizon must lie in [0, horizon]")
        k = int(np.searchsorted(self.jump_times, horizon, side="right"))
        return Path(self.jump_times[:k], self.sites[: k + 1], horizon)

    def sojourns(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end time of each sojourn (one per entry of ``sites``)."""
        starts = np.concatenate([[0.0], self.jump_times])
        ends = np.concatenate([self.jump_times, [self.horizon]])
        return starts, ends


@dataclass(frozen=True)
class OccupationStats:
    """Occupation functionals of a path at the origin.

    ``zero_visit_count`` counts jumps *into* the origin; the initial sojourn
    of a path started at 0 is visit number 0 and is not counted.
    """

    occupation_time_at_origin: float
    last_zero_time: float
    zero_visit_count: int


def occupation_time(path: Path, a: float = 0.0, b: float | None = None) -> float:
    """Lebesgue time spent at the origin during ``[a, b]``."""
    b = path.horizon if b is None else b
    if not 0 <= a <= b <= path.horizon:
        raise ValueError("need 0 <= a <= b <= horizon")
    starts, ends = path.sojourns()
    at_zero = ~path.sites.any(axis=1)
    overlap = np.clip(np.minimum(ends, b) - np.maximum(starts, a), 0.0, None)
    return float(overlap[at_zero].sum())


def occupation_stats(path: Path) -> OccupationStats:
    starts, ends = path.sojourns()
    at_zero = ~path.sites.any(axis=1)
    occ = float((ends - starts)[at_zero].sum())
    if at_zero.any():
        last = float(ends[np.flatnonzero(at_zero)[-1]])
    else:
        last = 0.0
    visits = int(at_zero[1:].sum())
    return OccupationStats(occ, last, visits)


def simulate_free_walk(d: int, start: Site | int, horizon: float, seed: int) -> Path:
    """One path of the rate-1 symmetric walk on Z^d started at ``start``."""
    d = check_dimension(d)
    start = as_site(start, d)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    rng = stream(seed)
    n = rng.poisson(horizon)
    # Given the count, Poisson jump times are uniform order statistics.
    times = np.sort(rng.uniform(0.0, horizon, size=n))
    steps = unit_steps(d)[rng.integers(0, 2 * d, size=n)]
    sites = np.vstack([np.asarray(start, dtype=np.int64)[None, :], start + np.cumsum(steps, axis=0)])
    return Path(times, sites, horizon)


def rescale_path(path: Path, n: float, grid: Iterable[float]) -> np.ndarray:
    """Evaluate ``X(n t) / sqrt(n)`` on ``grid`` (a subset of [0, 1])."""
    grid = np.asarray(list(grid), dtype=float)
    if np.any(grid < 0) or np.any(grid > 1):
        raise ValueError("grid must lie in [0, 1]")
    if path.horizon < n:
        raise ValueError(f"path horizon {path.horizon} is shorter than n={n}")
    vals = path.position(n * grid) / np.sqrt(n)
    return vals[:, 0] if path.d == 1 else vals


def _split_steps(rng: np.random.Generator, k: np.ndarray, d: int) -> np.ndarray:
    """Displacement of ``k`` uniform unit steps in Z^d, vectorised over ``k``."""
    out = np.empty((len(k), d), dtype=np.int64)
    left = k.astype(np.int64)
    for j in range(d):
        kj = left if j == d - 1 else rng.binomial(left, 1.0 / (d - j))
        left = left - kj
        out[:, j] = 2 * rng.binomial(kj, 0.5) - kj
    return out


def free_walk_endpoints(d: int, start: Site | int, horizon: float, n: int, seed: int) -> np.ndarray:
    """Exact samples of X(horizon) for ``n`` independent free walks, shape (n, d)."""
    d = check_dimension(d)
    start = np.asarray(as_site(start, d), dtype=np.int64)
    rng = stream(seed, 1)
    jumps = rng.poisson(horizon, size=n)
    return start + _split_steps(rng, jumps, d)


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    stderr: float
    n: int

    def interval(self, z: float = 3.0) -> tuple[float, float]:
        return self.mean - z * self.stderr, self.mean + z * self.stderr


# P(K >= k) for the half-length K of the first passage 1 -> 0 of the simple
# walk (T = 2K + 1); P(K >= k) = C(2k, k) / 4^k.
_PASSAGE_TABLE_SIZE = 4096
_kk = np.arange(1, _PASSAGE_TABLE_SIZE + 1)
_PASSAGE_TAIL = np.concatenate([[1.0], np.cumprod((2 * _kk - 1) / (2 * _kk))])
del _kk

# Walks whose sampled clock exceeds this are declared escaped (they are then
# ~10^7 sites out, far past any radius used in practice).
_PASSAGE_TIME_CAP = 1e15


def _passage_tail_asymptotic(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.exp(-0.5 * np.log(np.pi * k) - 1.0 / (8 * k) + 1.0 / (192 * k**3))


def _unit_passage_halves(u: np.ndarray) -> np.ndarray:
    """Inverse-CDF map from uniforms to K, where 2K + 1 is a unit first-passage time."""
    out = np.empty(len(u))
    small = u > _PASSAGE_TAIL[-1]
    out[small] = np.searchsorted(-_PASSAGE_TAIL, -u[small], side="right") - 1
    ub = u[~small]
    k = np.maximum(np.floor(1.0 / (np.pi * ub * ub) - 0.25), _PASSAGE_TABLE_SIZE)
    for _ in range(4):
        k = np.where(
            _passage_tail_asymptotic(k) < ub,
            k - 1,
            np.where(_passage_tail_asymptotic(k + 1) >= ub, k + 1, k),
        )
    out[~small] = k
    return out


def passage_steps(rng: np.random.Generator, m: np.ndarray) -> np.ndarray:
    """Jump-chain steps for a 1d simple walk to first travel distance ``m`` (vectorised)."""
    m = np.asarray(m, dtype=np.int64)
    owner = np.repeat(np.arange(len(m)), m)
    halves = _unit_passage_halves(rng.random(len(owner)))
    return m + 2.0 * np.bincount(owner, weights=halves, minlength=len(m))


def return_probability_mc(d: int, n_walks: int, escape_radius: float, seed: int) -> MCEstimate:
    """Monte Carlo frequency of ever returning to 0, walks stopped at ``escape_radius``.

    Coordinates of the continuous-time walk are independent rate-1/d walks, and
    the origin can only be reached once a nonzero coordinate (we take the
    smallest) has come back to 0. So each iteration samples that coordinate's
    first passage time exactly and moves the other coordinates by independent
    Skellam increments over the same time. A walk counts as escaped when it is
    found at Euclidean distance >= ``escape_radius`` at one of these times.
    """
    d = check_dimension(d)
    rng = stream(seed, 2)
    pos = np.zeros((n_walks, d), dtype=np.int64)
    pos[:, 0] = 1  # the first step lands on a neighbour; by symmetry take e1
    returned = 0
    r2 = float(escape_radius) ** 2
    while len(pos):
        hit = ~pos.any(axis=1)
        gone = (pos.astype(float) ** 2).sum(axis=1) >= r2
        returned += int(hit.sum())
        pos = pos[~(hit | gone)]
        if not len(pos):
            break
        a = np.abs(pos)
        j = np.where(a > 0, a, np.iinfo(np.int64).max).argmin(axis=1)
        rows = np.arange(len(pos))
        clock = rng.gamma(passage_steps(rng, a[rows, j]), float(d))
        alive = clock < _PASSAGE_TIME_CAP
        pos, j, clock = pos[alive], j[alive], clock[alive]
        lam = np.repeat(clock[:, None] / (2 * d), d, axis=1)
        pos = pos + rng.poisson(lam) - rng.poisson(lam)
        pos[np.arange(len(pos)), j] = 0
    p = returned / n_walks
    return MCEstimate(p, float(np.sqrt(p * (1 - p) / n_walks)), n_walks)
