"""Command line front-end.

    homopolymer lambda --d 1 --beta 0.75
    homopolymer psi --d 1 --beta -1 --x 3
    homopolymer accept --out results/

Every subcommand prints a JSON report on stdout and, with ``--out DIR``, writes
its artifacts (JSON, plus CSV tables where relevant) with an embedded manifest.
Exit status: 0 success, 1 acceptance or numerical failure, 2 usage error.
The seed of any Monte Carlo run can be overridden with HOMOPOLYMER_SEED.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, doob
from . import config as cf
from . import harmonic as hm
from . import kernel as kn
from . import limits as lm
from . import report as rp
from . import resolvent as rs
from . import wetting as wt
from .lattice import as_site, origin
from .rng import resolve_seed

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

NUMERICAL_ERRORS = (
    rs.QuadratureError,
    rs.PoleError,
    rs.ExtrapolationError,
    kn.TruncationError,
    kn.MemoryBudgetError,
    doob.ESSError,
    ArithmeticError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homopolymer", description="Homopolymer numerics, simulation and acceptance checks.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, fields in cf.SCHEMA.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value config file with [common] and per-subcommand sections")
        p.add_argument("--out", help="directory for artifacts")
        p.add_argument("--threads", help="cap on worker threads")
        for key in fields:
            p.add_argument(_flag(key), dest=key, default=None)
    return parser


def _configure_threads(threads: int | None) -> None:
    # numpy / scipy pick these up for their native pools
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def _site(cfg_value, d: int, default=None):
    if cfg_value is None:
        return origin(d) if default is None else default
    if len(cfg_value) != d:
        raise cf.ConfigError("site", f"expected {d} coordinates, got {len(cfg_value)}")
    return as_site(cfg_value, d)


# ---------------------------------------------------------------------------
# subcommands: each returns (result, csv tables {name: (header, rows)}, ok)


def _resolvent(c):
    d = c["d"]
    lam = complex(c["lam"], c["lam_imag"])
    x = _site(c["x"], d)
    value = rs.free_resolvent(lam, x, origin(d), d, route=c["route"])
    return {"d": d, "lambda": lam, "x": x, "resolvent": value}, {}, True


def _kernel(c):
    d, t = c["d"], c["t"]
    box = kn.BoxSpec(c["radius"], d) if c["radius"] else kn.BoxSpec.for_time(t, d)
    src = _site(c["source"], d)
    g = kn.propagate(c["beta"], box, t, src, method=c["method"])
    rows = [(*site, v) for site, v in zip(box.coords().tolist(), g.values.ravel()) if v > 0]
    header = [f"x{j}" for j in range(d)] + ["p"]
    result = {"time": t, "source": src, "total": g.total(), "truncation_error_bound": g.truncation_error_bound, "radius": box.radius}
    return result, {"kernel": (header, rows)}, True


def _partition(c):
    d = c["d"]
    times = sorted(c["t"])
    box = kn.BoxSpec(c["radius"], d) if c["radius"] else kn.BoxSpec.for_time(max(times), d)
    s = kn.kernel_series(c["beta"], box, times)
    rows = list(zip(times, s.partition.tolist(), s.truncation_bound.tolist()))
    result = {"times": times, "partition": s.partition, "truncation_bound": s.truncation_bound}
    return result, {"partition": (["t", "Z", "truncation_bound"], rows)}, True


def _psi(c):
    params = hm.model_params(c["d"], c["beta"])
    x = _site(c["x"], c["d"])
    return {"psi": hm.psi(params, x, c["route"]), "phase": params.phase, "lambda": params.lambda_beta}, {}, True


def _lambda(c):
    params = hm.model_params(c["d"], c["beta"])
    return {"lambda": params.lambda_beta, "phase": params.phase, "beta_cr": params.beta_cr}, {}, True


def _simulate_q(c):
    params = hm.model_params(c["d"], c["beta"])
    start = _site(c["start"], c["d"])
    ens = doob.simulate_q_ensemble(params, start, c["horizon"], c["n"], c["seed"])
    hist = np.bincount(ens.returns)
    result = {
        "n": ens.n,
        "horizon": ens.horizon,
        "mean_occupation": float(ens.occupation.mean()),
        "mean_returns": float(ens.returns.mean()),
        "mean_abs_endpoint": float(np.abs(ens.endpoint).sum(axis=1).mean()),
    }
    rows = [(*e, o, s, r) for e, o, s, r in zip(ens.endpoint.tolist(), ens.occupation, ens.last_zero, ens.returns)]
    header = [f"x{j}" for j in range(c["d"])] + ["occupation", "last_zero", "returns"]
    return result, {"returns_hist": (["k", "count"], list(enumerate(hist.tolist()))), "paths": (header, rows)}, True


def _sample_polymer(c):
    params = hm.model_params(c["d"], c["beta"])
    ens = doob.sample_polymer(params, c["t"], c["n"], c["seed"], ess_floor=c["ess_floor"])
    z = ens.z_estimate
    result = {
        "n": ens.paths.n,
        "ess": ens.ess,
        "z_estimate": z.mean,
        "z_stderr": z.stderr,
        "weighted_mean_occupation": ens.mean(ens.paths.occupation),
        "weighted_mean_returns": ens.mean(ens.paths.returns),
    }
    return result, {}, True


def _limits(c):
    params = hm.model_params(1, c["beta"])
    seed = c["seed"]
    ens = doob.sample_polymer(params, c["t"], c["n"], seed)
    reps = [
        lm.occupation_law_test(params, c["t"], c["n"], seed, c["occupation_threshold"], ensemble=ens),
        lm.visit_count_test(params, c["t"], c["n"], seed, c["visits_threshold"], ensemble=ens),
        lm.last_zero_test(params, c["t"], c["n"], seed, c["last_zero_threshold"], ensemble=ens),
    ]
    hist = np.bincount(np.clip(ens.paths.returns, 0, 11), weights=ens.weights, minlength=12)
    tables = {"visits_hist": (["k", "weighted_frequency"], list(enumerate(hist.tolist())))}
    return {"reports": [r.to_dict() for r in reps]}, tables, all(r.passed for r in reps)


def _scaling(c):
    params = hm.model_params(1, c["beta"])
    seed = c["seed"]
    rep, sym = lm.scaling_endpoint_test(c["source"], params, c["n_time"], c["n"], seed, c["threshold"])
    result = {"endpoint": rep.to_dict(), "sign_symmetry": sym}
    ok = rep.passed and sym.passed
    if c["multitime"]:
        mt = lm.scaling_multitime_test(params, n_time=c["n_time"], n_paths=c["n"], seed=seed)
        result["multitime"] = mt
        ok = ok and mt.passed
    return result, {}, ok


def _wetting(c):
    params = wt.WettingParams(c["beta_prime"])
    if c["mode"] == "identity":
        rep = wt.wetting_identity_check(params, c["t"], c["length"])
        return rep, {}, rep.passed
    if c["mode"] == "kernel":
        box = wt.HalfLineBox(c["length"]) if c["length"] else wt.HalfLineBox.for_time(c["t"])
        g = wt.wetting_kernel(params, box, c["t"], c["x"])
        rows = list(enumerate(g.values.tolist()))
        return {"total": g.total(), "truncation_error_bound": g.truncation_error_bound}, {"kernel": (["y", "p"], rows)}, True
    rep = wt.reflected_scaling_test(c["n_time"], c["n"], c["seed"], c["beta_prime"])
    return rep.to_dict(), {}, rep.passed


def _accept(c):
    seed = c["seed"]
    results = acceptance.run(c["only"] or None, seed, echo=lambda s: print(s, file=sys.stderr))
    return {"seed": seed, "criteria": results, "passed": all(r.passed for r in results)}, {}, all(r.passed for r in results)


HANDLERS = {
    "resolvent": _resolvent,
    "kernel": _kernel,
    "partition": _partition,
    "psi": _psi,
    "lambda": _lambda,
    "simulate-q": _simulate_q,
    "sample-polymer": _sample_polymer,
    "limits": _limits,
    "scaling": _scaling,
    "wetting": _wetting,
    "accept": _accept,
}


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    try:
        args = build_parser().parse_args(argv)
        sub = args.subcommand
        file_values = cf.read_file(args.config) if args.config else None
        overrides = {k: getattr(args, k) for k in cf.SCHEMA[sub]}
        overrides.update(out=args.out, threads=args.threads)
        cfg = cf.resolve(sub, file_values, overrides)
    except (UsageError, cf.ConfigError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    _configure_threads(cfg["threads"])
    if "seed" in cfg.values:
        # the manifest records the seed actually used
        cfg.values["seed"] = resolve_seed(cfg["seed"], acceptance.DEFAULT_SEED)
    try:
        result, tables, ok = HANDLERS[sub](cfg.values)
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        # configuration errors and violated preconditions of the library
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    # the destination is not part of what was computed, so reruns elsewhere stay bit-identical
    man = rp.manifest(sub, {k: v for k, v in cfg.values.items() if k != "out"})
    stdout.write(json.dumps(rp.to_jsonable(result), sort_keys=True) + "\n")
    if cfg["out"]:
        out = Path(cfg["out"])
        rp.write_json(out / f"{sub}.json", man, result)
        for name, (header, rows) in tables.items():
            rp.write_csv(out / f"{sub}_{name}.csv", man, header, rows)
    return EXIT_OK if ok else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
