"""Reference laws and the statistical tests for the polymer's limit laws.

Under the polymer measure with beta < 0 in d = 1, as t -> inf:
  occupation time at 0      -> Exp(-beta)
  jumps into 0              -> Geom(-beta / (1 - beta)) on {0, 1, ...}
  last zero before t        -> density -beta p_beta(y, 0, 0) dy on [0, inf)
  X_t / sqrt(t)             -> J M_1, signed meander endpoint, density |x| e^{-x^2/2} / 2
and under Q_0, X_t / sqrt(t) -> J R_1 with R the Bessel-3 process, density x^2 e^{-x^2/2} / sqrt(2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats
from scipy.spatial.distance import cdist

from . import doob
from . import harmonic as hm
from . import kernel as kn
from .rng import stream

KINDS = ("exp", "geom", "last_zero", "signed_bessel3", "signed_meander", "bessel3", "half_normal")

# stream tags for the reference simulators
_TAG_BESSEL = 21
_TAG_SUBSAMPLE = 22

# grid points per unit time for the last-zero reference cdf
_LAST_ZERO_DENSITY = 20


# ---------------------------------------------------------------------------
# reference laws


@dataclass(frozen=True)
class ReferenceLaw:
    kind: str
    params: tuple
    cdf: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    support: tuple[float, float] = (-math.inf, math.inf)
    pmf: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        validate_cdf(self)

    def __call__(self, x) -> np.ndarray:
        return self.cdf(np.asarray(x, dtype=float))


def validate_cdf(law: ReferenceLaw, points: int = 2001, tol: float = 1e-9) -> None:
    """Raise unless the cdf is nondecreasing with limits 0 and 1."""
    lo, hi = law.support
    lo = -40.0 if math.isinf(lo) else lo
    hi = 40.0 if math.isinf(hi) else hi
    x = np.linspace(lo, hi, points)
    f = np.asarray(law.cdf(x), dtype=float)
    if np.any(~np.isfinite(f)) or np.any(np.diff(f) < -tol):
        raise ValueError(f"{law.kind}: cdf is not nondecreasing")
    below = float(law.cdf(np.array([lo - 1.0]))[0])
    if abs(below) > tol or abs(f[-1] - 1.0) > 1e-6:
        raise ValueError(f"{law.kind}: cdf limits are {below}, {f[-1]}, not 0 and 1")


def exp_law(rate: float) -> ReferenceLaw:
    if not rate > 0:
        raise ValueError("rate must be positive")
    return ReferenceLaw(
        "exp", (float(rate),), lambda x: np.where(x < 0, 0.0, -np.expm1(-rate * np.clip(x, 0, None))), (0.0, 60.0 / rate)
    )


def geom_law(success: float) -> ReferenceLaw:
    """P(N = k) = s (1 - s)^k, k = 0, 1, ..."""
    s = float(success)
    if not 0 < s <= 1:
        raise ValueError("success parameter must lie in (0, 1]")

    def cdf(x):
        k = np.floor(x)
        return np.where(k < 0, 0.0, 1.0 - (1.0 - s) ** (np.clip(k, 0, None) + 1))

    def pmf(k):
        k = np.asarray(k)
        return np.where(k < 0, 0.0, s * (1.0 - s) ** np.clip(k, 0, None))

    hi = 10.0 if s == 1 else math.ceil(40 / -math.log1p(-s))
    return ReferenceLaw("geom", (s,), cdf, (0.0, float(hi)), pmf)


def _signed(radial_cdf):
    def cdf(x):
        return 0.5 + 0.5 * np.sign(x) * radial_cdf(np.abs(x))

    return cdf


def signed_bessel3_law() -> ReferenceLaw:
    """J R_1: density x^2 e^{-x^2/2} / sqrt(2 pi)."""
    return ReferenceLaw("signed_bessel3", (), _signed(lambda r: stats.chi.cdf(r, 3)))


def signed_meander_law() -> ReferenceLaw:
    """J M_1: density |x| e^{-x^2/2} / 2."""
    return ReferenceLaw("signed_meander", (), _signed(lambda r: -np.expm1(-0.5 * r * r)))


def bessel3_law(time: float = 1.0) -> ReferenceLaw:
    """R_time for R a Bessel-3 process from 0: |N(0, time I_3)|."""
    s = math.sqrt(time)
    return ReferenceLaw("bessel3", (float(time),), lambda x: np.where(x < 0, 0.0, stats.chi.cdf(np.clip(x, 0, None) / s, 3)), (0.0, 40 * s))


def half_normal_law() -> ReferenceLaw:
    return ReferenceLaw("half_normal", (), lambda x: np.where(x < 0, 0.0, stats.halfnorm.cdf(np.clip(x, 0, None))), (0.0, 40.0))


@dataclass(frozen=True)
class LastZeroReference:
    """Reference cdf of the last zero before t, built from p_beta(., 0, 0) on a grid."""

    law: ReferenceLaw
    grid: np.ndarray
    integrated: np.ndarray  # -beta int_0^y p_beta(s, 0, 0) ds
    identity_gap: float  # max |integrated - (1 - Z_y)|
    mass: float  # integrated value at y = t
    total_with_tail: float  # mass plus the analytic tail beyond t; should be 1


def last_zero_reference(beta: float, t: float, box: kn.BoxSpec | None = None, points: int | None = None) -> LastZeroReference:
    """cdf of -beta p_beta(y,0,0) dy restricted to [0, t] and normalised by its mass 1 - Z_t.

    The integral is taken by the trapezoid rule on a fine grid and compared
    with the exact identity -beta int_0^y p = 1 - Z_y from the same propagation.
    The tail beyond t uses p_beta(s,0,0) ~ s^{-3/2} / (sqrt(2 pi) beta^2) (d = 1).
    """
    if not beta < 0 or not t > 0:
        raise ValueError("need beta < 0 and t > 0")
    box = kn.BoxSpec.for_time(t, 1) if box is None else box
    points = max(2001, int(_LAST_ZERO_DENSITY * t) + 1) if points is None else int(points)
    grid = np.linspace(0.0, t, points)
    series = kn.kernel_series(beta, box, grid)
    integrated = -beta * integrate.cumulative_trapezoid(series.at_target, grid, initial=0.0)
    gap = float(np.max(np.abs(integrated - (1.0 - series.partition))))
    mass = float(integrated[-1])
    tail = 2.0 / (abs(beta) * math.sqrt(2 * math.pi * t))
    norm = integrated / mass

    def cdf(y):
        return np.interp(y, grid, norm, left=0.0, right=1.0)

    law = ReferenceLaw("last_zero", (float(beta), float(t)), cdf, (0.0, float(t)))
    return LastZeroReference(law, grid, integrated, gap, mass, mass + tail)


# ---------------------------------------------------------------------------
# distances


def ks_statistic(samples, cdf, weights=None) -> float:
    """sup |F_n - F| for a (weighted) sample against a continuous cdf; ties allowed."""
    x = np.asarray(samples, dtype=float).ravel()
    if len(x) == 0:
        raise ValueError("empty sample")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape or np.any(w < 0):
        raise ValueError("weights must be nonnegative and match the sample")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order] / w.sum()
    u, start = np.unique(x, return_index=True)
    wu = np.add.reduceat(w, start)
    right = np.minimum(np.cumsum(wu), 1.0)
    left = right - wu
    f = np.asarray(cdf(u), dtype=float)
    d = max(np.max(np.abs(right - f)), np.max(np.abs(left - f)))
    return float(min(1.0, d))


def tv_distance(counts, pmf, kmax: int = 10, weights=None) -> float:
    """Total variation over {0..kmax} plus one tail bin {> kmax}."""
    k = np.asarray(counts).ravel()
    w = np.ones(len(k)) if weights is None else np.asarray(weights, dtype=float).ravel()
    w = w / w.sum()
    emp = np.bincount(np.clip(k, 0, kmax + 1), weights=w, minlength=kmax + 2)
    ref = np.asarray(pmf(np.arange(kmax + 1)), dtype=float)
    ref = np.append(ref, max(0.0, 1.0 - ref.sum()))
    return float(0.5 * np.abs(emp - ref).sum())


def energy_distance(a: np.ndarray, b: np.ndarray, chunk: int = 2048) -> float:
    """2 E|X - Y| - E|X - X'| - E|Y - Y'| (V-statistic) for samples in R^k."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[0] == 1 and a.shape[1] > 1 and b.shape[0] == 1:
        a, b = a.T, b.T

    def mean_dist(p, q):
        total = 0.0
        for i in range(0, len(p), chunk):
            total += cdist(p[i : i + chunk], q).sum()
        return total / (len(p) * len(q))

    return float(2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class KSReport:
    name: str
    statistic: float
    n: int
    threshold: float
    skipped: bool = False
    ess: float | None = None
    details: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.skipped and not 0.0 <= self.statistic <= 1.0:
            raise ValueError("statistic must lie in [0, 1]")

    @property
    def passed(self) -> bool:
        return self.skipped or self.statistic <= self.threshold

    @property
    def verdict(self) -> str:
        if self.skipped:
            return "skipped"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "n": self.n,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "ess": self.ess,
            **{k: v for k, v in self.details.items()},
        }


def _require_d1_negative(params: hm.ModelParams):
    if params.d != 1 or not params.beta < 0:
        raise ValueError("limit-law tests need d = 1 and beta < 0")


def _polymer(params, t, n, seed, ensemble):
    if ensemble is not None:
        if ensemble.paths.horizon != t:
            raise ValueError("ensemble horizon does not match t")
        return ensemble
    return doob.sample_polymer(params, t, n, seed)


def occupation_law_test(
    params: hm.ModelParams, t: float, n: int, seed: int, threshold: float = 0.03, ensemble: doob.WeightedEnsemble | None = None
) -> KSReport:
    """Weighted KS of the occupation time at 0 against Exp(-beta)."""
    _require_d1_negative(params)
    if t == 0:
        return KSReport("occupation", math.nan, 0, threshold, skipped=True, details={"reason": "t = 0: occupation is 0 a.s."})
    ens = _polymer(params, t, n, seed, ensemble)
    law = exp_law(-params.beta)
    stat = ks_statistic(ens.paths.occupation, law, ens.weights)
    mean = ens.mean(ens.paths.occupation)
    return KSReport("occupation", stat, ens.paths.n, threshold, ess=ens.ess, details={"weighted_mean": mean, "limit_mean": -1 / params.beta})


def visit_count_test(
    params: hm.ModelParams,
    t: float,
    n: int,
    seed: int,
    threshold: float = 0.02,
    kmax: int = 10,
    ensemble: doob.WeightedEnsemble | None = None,
) -> KSReport:
    """Weighted TV distance of the jumps into 0 against Geom(-beta / (1 - beta))."""
    _require_d1_negative(params)
    ens = _polymer(params, t, n, seed, ensemble)
    s = -params.beta / (1 - params.beta)
    stat = tv_distance(ens.paths.returns, geom_law(s).pmf, kmax, ens.weights)
    return KSReport("visits", stat, ens.paths.n, threshold, ess=ens.ess, details={"success": s, "kmax": kmax})


def last_zero_test(
    params: hm.ModelParams, t: float, n: int, seed: int, threshold: float = 0.04, ensemble: doob.WeightedEnsemble | None = None
) -> KSReport:
    """Weighted KS of the last zero before t against the normalised -beta p_beta(y,0,0) law on [0, t]."""
    _require_d1_negative(params)
    ens = _polymer(params, t, n, seed, ensemble)
    ref = last_zero_reference(params.beta, t)
    sigma = ens.paths.last_zero
    if np.any(sigma > t):
        raise AssertionError("last zero beyond the horizon")
    stat = ks_statistic(sigma, ref.law, ens.weights)
    # the same sample against the unnormalised limit cdf 1 - Z_y, for the record
    raw = ks_statistic(sigma, lambda y: np.interp(y, ref.grid, ref.integrated), ens.weights)
    return KSReport(
        "last_zero",
        stat,
        ens.paths.n,
        threshold,
        ess=ens.ess,
        details={
            "reference_mass_on_0_t": ref.mass,
            "total_with_tail": ref.total_with_tail,
            "identity_gap": ref.identity_gap,
            "ks_unnormalised": raw,
        },
    )


# ---------------------------------------------------------------------------
# Imhof endpoint relation


def reference_endpoint_densities(x: float) -> tuple[float, float]:
    """(signed meander density, signed Bessel-3 density) at x."""
    x = float(x)
    return 0.5 * abs(x) * math.exp(-0.5 * x * x), x * x * math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def bessel3_radial_density(x: float) -> float:
    return math.sqrt(2 / math.pi) * x * x * math.exp(-0.5 * x * x)


DEFAULT_TEST_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "one": lambda x: 1.0,
    "x": lambda x: x,
    "x^2": lambda x: x * x,
    "cos": math.cos,
    "1{x<1}": lambda x: 1.0 if x < 1 else 0.0,
}


@dataclass(frozen=True)
class ImhofRow:
    name: str
    meander: float
    bessel: float

    @property
    def error(self) -> float:
        return abs(self.meander - self.bessel)


def imhof_endpoint_check(functions: dict | None = None) -> tuple[ImhofRow, ...]:
    """E f(M_1) against E[f(R_1) / R_1] / E[1 / R_1], each by its own quadrature."""
    functions = DEFAULT_TEST_FUNCTIONS if functions is None else functions
    inv_mean = integrate.quad(lambda x: bessel3_radial_density(x) / x, 0, np.inf, epsabs=1e-13)[0]
    rows = []
    for name, f in functions.items():
        brk = [1.0] if name == "1{x<1}" else None
        lhs = integrate.quad(lambda x: f(x) * x * math.exp(-0.5 * x * x), 0, 40, points=brk, epsabs=1e-13, limit=200)[0]
        rhs = integrate.quad(lambda x: f(x) / x * bessel3_radial_density(x), 0, 40, points=brk, epsabs=1e-13, limit=200)[0]
        rows.append(ImhofRow(name, lhs, rhs / inv_mean))
    return tuple(rows)


def inverse_bessel_mean() -> float:
    """E[1 / R_1] by quadrature; equals sqrt(2 / pi)."""
    return integrate.quad(lambda x: bessel3_radial_density(x) / x, 0, np.inf, epsabs=1e-13)[0]


# ---------------------------------------------------------------------------
# scaling limits


SOURCES = ("Q0", "polymer")


@dataclass(frozen=True)
class SymmetryReport:
    positive: float
    stderr: float

    @property
    def z_score(self) -> float:
        return (self.positive - 0.5) / self.stderr if self.stderr > 0 else 0.0

    @property
    def passed(self) -> bool:
        return abs(self.positive - 0.5) <= 3 * self.stderr


def sign_symmetry(x: np.ndarray, weights: np.ndarray | None = None, ess: float | None = None) -> SymmetryReport:
    """Share of X > 0 among X != 0, with its standard error at the effective sample size."""
    x = np.asarray(x).ravel()
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float).ravel()
    nz = x != 0
    p = float(w[nz & (x > 0)].sum() / w[nz].sum())
    m = float(nz.sum()) if ess is None else ess * float(w[nz].sum() / w.sum())
    return SymmetryReport(p, math.sqrt(p * (1 - p) / m))


def scaling_endpoint_test(
    source: str, params: hm.ModelParams, n_time: float, n_paths: int, seed: int, threshold: float | None = None
) -> tuple[KSReport, SymmetryReport]:
    """X_n / sqrt(n) against J R_1 (Q0) or J M_1 (polymer), plus the sign symmetry."""
    _require_d1_negative(params)
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}")
    if source == "Q0":
        ens = doob.simulate_q_ensemble(params, 0, n_time, n_paths, seed)
        x = ens.endpoint[:, 0] / math.sqrt(n_time)
        weights, ess, law = None, float(n_paths), signed_bessel3_law()
        threshold = 0.03 if threshold is None else threshold
    else:
        wens = doob.sample_polymer(params, n_time, n_paths, seed)
        x = wens.paths.endpoint[:, 0] / math.sqrt(n_time)
        weights, ess, law = wens.weights, wens.ess, signed_meander_law()
        threshold = 0.04 if threshold is None else threshold
    stat = ks_statistic(x, law, weights)
    sym = sign_symmetry(x, weights, ess)
    return KSReport(f"endpoint_{source}", stat, n_paths, threshold, ess=ess), sym


def simulate_bessel3(times: Sequence[float], n: int, seed: int) -> np.ndarray:
    """|B_t| for a 3-d Brownian motion from 0 at increasing times, shape (n, len(times))."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be positive and increasing")
    rng = stream(seed, _TAG_BESSEL)
    dt = np.diff(times, prepend=0.0)
    inc = rng.standard_normal((n, len(times), 3)) * np.sqrt(dt)[None, :, None]
    return np.linalg.norm(np.cumsum(inc, axis=1), axis=2)


def bessel_reference_self_test(n: int = 100_000, seed: int = 0, threshold: float = 0.01) -> KSReport:
    r = simulate_bessel3([1.0], n, seed)[:, 0]
    return KSReport("bessel3_reference", ks_statistic(r, bessel3_law(1.0)), n, threshold)


@dataclass(frozen=True)
class MultitimeReport:
    times: tuple[float, ...]
    energy: float
    threshold: float
    marginal_ks: tuple[float, ...]
    n: int
    subsample: int

    @property
    def passed(self) -> bool:
        return self.energy <= self.threshold


# 1.5x the pilot energy distance (0.00168 at the default sizes, seed 777), see pilot/pilot_values.json
MULTITIME_THRESHOLD = 0.0025


def scaling_multitime_test(
    params: hm.ModelParams,
    times: Sequence[float] = (0.5, 1.0),
    n_time: float = 2500.0,
    n_paths: int = 20_000,
    seed: int = 0,
    subsample: int = 3000,
    threshold: float | None = None,
) -> MultitimeReport:
    """Joint law of |X_{s n}| / sqrt(n), s in ``times``, under Q_0 against Bessel-3 marginals."""
    _require_d1_negative(params)
    times = tuple(float(s) for s in times)
    if any(not 0 < s <= 1 for s in times):
        raise ValueError("times must lie in (0, 1]")
    ens = doob.simulate_q_ensemble(params, 0, n_time, n_paths, seed, [s * n_time for s in times])
    walk = np.abs(ens.records[:, :, 0]) / math.sqrt(n_time)
    ref = simulate_bessel3(times, n_paths, seed)
    marg = tuple(ks_statistic(walk[:, i], bessel3_law(s)) for i, s in enumerate(times))
    rng = stream(seed, _TAG_SUBSAMPLE)
    m = min(subsample, n_paths)
    ia = rng.choice(n_paths, m, replace=False)
    ib = rng.choice(n_paths, m, replace=False)
    energy = energy_distance(walk[ia], ref[ib])
    threshold = MULTITIME_THRESHOLD if threshold is None else threshold
    return MultitimeReport(times, energy, threshold, marg, n_paths, m)


# ---------------------------------------------------------------------------
# terminal laws of Q


def q_terminal_laws(params: hm.ModelParams, horizon: float, n: int, seed: int, ks_threshold: float = 0.03, tv_threshold: float = 0.02):
    """Occupation time and jumps into 0 of Q_0 up to a long horizon against Exp(-beta)
    and Geom(-beta / (1 - beta)): the limit laws are the terminal laws of Q."""
    _require_d1_negative(params)
    ens = doob.simulate_q_ensemble(params, 0, horizon, n, seed)
    occ = KSReport("q_occupation", ks_statistic(ens.occupation, exp_law(-params.beta)), n, ks_threshold)
    s = -params.beta / (1 - params.beta)
    vis = KSReport("q_visits", tv_distance(ens.returns, geom_law(s).pmf), n, tv_threshold)
    return occ, vis


def last_zero_exact_law(beta: float, t: float, box: kn.BoxSpec | None = None, points: int | None = None) -> tuple[ReferenceLaw, float]:
    """Exact law of the last zero before t under the polymer measure (d = 1).

    P(sigma_t in dy) = p_beta(y,0,0) S(t - y) dy / Z + p_beta(t,0,0) / Z at y = t,
    S(u) the probability that the free walk from 1 avoids 0 up to time u
    (the walk leaves 0 at rate 1). Returns the law and the normalisation Z,
    which should equal Z_{beta,t}.
    """
    box = kn.BoxSpec.for_time(t, 1) if box is None else box
    points = max(2001, int(_LAST_ZERO_DENSITY * t) + 1) if points is None else int(points)
    grid = np.linspace(0.0, t, points)
    p = kn.kernel_series(beta, box, grid).at_target
    gen = kn.box_generator(0.0, box)
    keep = np.arange(box.n_sites) != box.index(0)
    killed = gen[keep][:, keep]
    v0 = np.zeros(box.n_sites)
    v0[box.index(1)] = 1.0
    surv = kn.evolve(killed, v0[keep], grid, reduce=lambda v: (v.sum(),))[0][:, 0]
    cont = integrate.cumulative_trapezoid(p * surv[::-1], grid, initial=0.0)
    z = float(cont[-1] + p[-1])
    cum = cont / z

    def cdf(y):
        return np.where(np.asarray(y) >= t, 1.0, np.interp(y, grid, cum, left=0.0))

    return ReferenceLaw("last_zero", (float(beta), float(t), "exact"), cdf, (0.0, float(t))), z
