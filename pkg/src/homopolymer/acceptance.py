"""The acceptance suite: eleven desk-scale checks, each with fixed seeds and tolerances.

Every criterion returns a CriterionResult made of named checks; the runtime limit
is one of the checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from . import doob
from . import harmonic as hm
from . import kernel as kn
from . import lattice as lt
from . import limits as lm
from . import resolvent as rs
from . import wetting as wt
from .rng import stream

DEFAULT_SEED = 0


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    target: str
    passed: bool


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    checks: tuple[Check, ...]
    seconds: float
    limit_seconds: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def line(self) -> str:
        failed = [c.name for c in self.checks if not c.passed]
        tail = "" if not failed else "  failed: " + ", ".join(failed)
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}  ({self.seconds:.1f} s){tail}"


def _le(name, value, tol):
    return Check(name, float(value), f"<= {tol:g}", bool(value <= tol))


def _within(name, value, lo, hi):
    return Check(name, float(value), f"in [{lo:g}, {hi:g}]", bool(lo <= value <= hi))


def _true(name, ok, value=float("nan")):
    return Check(name, float(value), "true", bool(ok))


def _timed(number, title, limit, body: Callable[[], list[Check]]) -> CriterionResult:
    t0 = time.perf_counter()
    checks = list(body())
    dt = time.perf_counter() - t0
    checks.append(_le("runtime_s", dt, limit))
    return CriterionResult(number, title, tuple(checks), dt, limit)


# ---------------------------------------------------------------------------


def criterion_1(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        rng = stream(seed, 1)
        lams = [complex(rng.uniform(0.05, 5)) for _ in range(7)]
        lams += [complex(-rng.uniform(2.05, 7)) for _ in range(7)]
        lams += [complex(rng.uniform(-3, 3), rng.choice([-1, 1]) * rng.uniform(0.1, 2)) for _ in range(6)]
        worst = 0.0
        for lam in lams:
            quad = rs.free_diagonal_resolvent(lam, 1, route="tensor")
            # principal roots taken separately: the branch analytic off [-2, 0]
            exact = 1 / (np.sqrt(lam) * np.sqrt(lam + 2))
            worst = max(worst, abs(quad - exact) / abs(exact))
        return [_le("max_rel_error", worst, 1e-8)]

    return _timed(1, "resolvent closed form, d=1", 1.0, body)


def criterion_2(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        beta = 0.75
        lam = rs.bisect_lambda(beta, 1)
        return [_le("abs_error", abs(lam - (math.sqrt(1 + beta**2) - 1)), 1e-10)]

    return _timed(2, "lambda(3/4) = 1/4, d=1", 1.0, body)


def criterion_3(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        bcr = rs.beta_critical(3)
        est = lt.return_probability_mc(3, 100_000, 1000, seed + 3)
        lo, hi = est.interval(3.0)
        escape_lo, escape_hi = 1 - hi, 1 - lo
        gap = max(0.0, escape_lo - bcr, bcr - escape_hi)
        return [_le("distance_to_3sigma_interval", gap, 1e-3), Check("beta_cr", bcr, "quadrature", True)]

    return _timed(3, "beta_cr(3) against return-frequency MC", 60.0, body)


def criterion_4(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        beta, t = -1.0, 400.0
        z = kn.partition_function(beta, kn.BoxSpec(130, 1), t)
        ratio = z.value / ((-1 / beta) * math.sqrt(2 / (math.pi * t)))
        return [_within("ratio", ratio, 0.95, 1.05), _le("truncation_bound", z.truncation_bound, 1e-6)]

    return _timed(4, "Z_{-1,400} against its asymptote, d=1", 30.0, body)


def criterion_5(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        checks = []
        for d in (1, 2):
            r = kn.partition_laplace_check(-1.0, d, (0.1, 0.3, 0.5, 1.0))
            checks.append(_le(f"max_rel_error_d{d}", r.max_rel_error, 0.02))
        return checks

    return _timed(5, "Laplace transform of Z, d=1,2", 300.0, body)


def criterion_6(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        r1 = kn.p00_asymptote_check(-1.0, 1, [400.0])
        r2 = kn.p00_asymptote_check(-1.0, 2, [500.0, 2000.0])
        return [
            _within("ratio_d1_t400", r1.ratios[0], 0.9, 1.1),
            _within("ratio_d2_t2000", r2.ratios[-1], 0.75, 1.25),
            _true("d2_closer_at_2000_than_500", r2.approaching, r2.ratios[0]),
        ]

    return _timed(6, "p_beta(t,0,0) asymptotics, d=1,2", 600.0, body)


def criterion_7(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        params = hm.model_params(1, -1.0)
        box = kn.BoxSpec.for_time(50.0, 1)
        checks = []
        for x in (0, 3, -7):
            q = doob.q_kernel(params, box, 50.0, x)
            checks.append(_le(f"row_sum_error_x{x}", max(0.0, abs(q.total() - 1) - q.truncation_error_bound), 1e-8))
        q0 = doob.q_kernel(params, box, 50.0, 0)
        psi = doob.PsiField(params)(box.coords()).reshape(box.shape)
        closure = float(np.sum(q0.values / psi))
        z = kn.partition_function(-1.0, box, 50.0).value
        checks.append(_le("closure_rel_error", abs(closure - z) / z, 1e-6))
        return checks

    return _timed(7, "h-transform rows and closure", 10.0, body)


def criterion_8(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        params = hm.model_params(1, -1.0)
        n, t = 20_000, 200.0
        ens = doob.sample_polymer(params, t, n, seed + 8, ess_floor=0.0)
        occ = lm.occupation_law_test(params, t, n, seed + 8, 0.03, ensemble=ens)
        vis = lm.visit_count_test(params, t, n, seed + 8, 0.02, ensemble=ens)
        last = lm.last_zero_test(params, t, n, seed + 8, 0.04, ensemble=ens)
        return [
            _le("occupation_ks", occ.statistic, 0.03),
            _le("visits_tv", vis.statistic, 0.02),
            _le("last_zero_ks", last.statistic, 0.04),
            Check("ess_fraction", ens.ess / n, ">= 0.05", ens.ess / n >= 0.05),
        ]

    return _timed(8, "limit laws of occupation, visits, last zero", 300.0, body)


def criterion_9(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        params = hm.model_params(1, -1.0)
        q, qs = lm.scaling_endpoint_test("Q0", params, 2500.0, 20_000, seed + 9, 0.03)
        p, ps = lm.scaling_endpoint_test("polymer", params, 2500.0, 20_000, seed + 90, 0.04)
        return [
            _le("Q0_endpoint_ks", q.statistic, 0.03),
            _le("polymer_endpoint_ks", p.statistic, 0.04),
            _le("Q0_sign_z", abs(qs.z_score), 3.0),
            _le("polymer_sign_z", abs(ps.z_score), 3.0),
        ]

    return _timed(9, "scaling-limit endpoints", 600.0, body)


def criterion_10(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        ident = wt.wetting_identity_check(wt.WettingParams(0.0), 50.0)
        refl = wt.reflected_scaling_test(2500.0, 20_000, seed + 10, 0.5, 0.02)
        return [_le("endpoint_pmf_error", ident.pmf_error, 1e-8), _le("reflected_ks", refl.statistic, 0.02)]

    return _timed(10, "wetting identity and reflected walk", 300.0, body)


def _invariant_checks() -> list[Check]:
    cases = {
        "box_radius": lambda: kn.BoxSpec(5, 1),
        "spectral_param_on_cut": lambda: rs.SpectralParam(-1.0),
        "model_params_phase": lambda: hm.ModelParams(1, -1.0, 0.0, 0.1, "subcritical"),
        "path_times": lambda: lt.Path(np.array([2.0, 1.0]), np.array([[0], [1], [0]]), 3.0),
        "reference_cdf": lambda: lm.ReferenceLaw("exp", (1.0,), lambda x: np.where(x < 1, 0.5, 0.2), (0.0, 5.0)),
        "ks_range": lambda: lm.KSReport("x", 1.5, 1, 0.1),
        "wetting_params": lambda: wt.WettingParams(float("nan")),
    }
    checks = []
    for name, make in cases.items():
        try:
            make()
            ok = False
        except (ValueError, TypeError):
            ok = True
        checks.append(_true(f"invariant_{name}", ok))
    return checks


def criterion_11(seed: int = DEFAULT_SEED) -> CriterionResult:
    def body():
        checks = _invariant_checks()
        for beta in (-1.0, 0.75):
            checks.append(_le(f"residual_d1_beta{beta}", hm.harmonic_residual(hm.model_params(1, beta), 20), 1e-12))
        for beta in (0.5, 1.0):
            checks.append(_le(f"residual_d3_beta{beta}", hm.harmonic_residual(hm.model_params(3, beta), 3), 1e-8))
        for d, grid in ((1, np.linspace(-1, 3, 41)), (2, np.linspace(0.3, 2.3, 41))):
            lam = np.array([hm.lambda_of_beta(b, d) for b in grid])
            checks.append(_true(f"lambda_monotone_d{d}", np.all(np.diff(lam) >= -1e-12), np.diff(lam).min()))
            checks.append(_true(f"lambda_convex_d{d}", np.all(np.diff(lam, 2) >= -1e-9), np.diff(lam, 2).min()))
        dom = doob.coupling_domination_test(hm.model_params(1, -1.0), 3, (10.0, 50.0, 100.0), 20_000, seed + 11)
        checks.append(_true("coupling_domination", dom.passed))
        # semigroup: p_{t+s} = p_t p_s, and symmetry of the kernel
        box = kn.BoxSpec(40, 1)
        gen = kn.box_generator(-1.0, box)
        v0 = np.zeros(box.n_sites)
        v0[box.index(3)] = 1.0
        half = kn.evolve(gen, v0, [10.0])[0][0]
        two = kn.evolve(gen, half, [10.0])[0][0]
        direct = kn.evolve(gen, v0, [20.0])[0][0]
        checks.append(_le("semigroup_error", np.abs(two - direct).max(), 1e-12))
        back = kn.propagate(-1.0, box, 20.0, -5).value(3)
        checks.append(_le("kernel_symmetry", abs(kn.propagate(-1.0, box, 20.0, 3).value(-5) - back), 1e-14))
        rk = kn.evolve_rk4(gen, v0, 20.0, 0.01)
        checks.append(_le("rk4_vs_uniformization", np.abs(rk - direct).max(), 1e-9))
        x = lt.free_walk_endpoints(1, 0, 50.0, 20_000, seed + 11)[:, 0]
        checks.append(_true("free_walk_sign_flip", stats.ks_2samp(x, -x).pvalue > 1e-3))
        return checks

    return _timed(11, "property suites", 300.0, body)


CRITERIA: dict[int, Callable[[int], CriterionResult]] = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
    10: criterion_10,
    11: criterion_11,
}


def run(numbers=None, seed: int = DEFAULT_SEED, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if not numbers else sorted(numbers)
    out = []
    for k in numbers:
        res = CRITERIA[k](seed)
        if echo is not None:
            echo(res.line())
        out.append(res)
    return out
