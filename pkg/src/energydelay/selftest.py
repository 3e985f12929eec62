"""Quick invariant checks that run without the test suite."""

from __future__ import annotations

import math

import numpy as np

from .central import MbiConfig, cost_sum, dinkelbach, run_mbi_min, run_mbi_sum
from .feasibility import check_necessary, check_sufficient, qos_sinr, random_feasible_start
from .game import BrdConfig, check_uniqueness_condition, run_brd, verify_ne
from .model import SuccessModel, sinr_all
from .numerics import spectral_radius
from .scenario import fit_delta, random_game


def _success_properties():
    for d in (0.1, 1.0, 10.0):
        ok, why = SuccessModel(d).check_properties()
        if not ok:
            return f"delta={d}: {why}"
        ok, worst = check_uniqueness_condition(SuccessModel(d))
        if not ok:
            return f"uniqueness condition fails for delta={d} (worst {worst:.3g})"
    return None


def _spectral_radius():
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = rng.uniform(0, 1, (8, 8))
        err = abs(spectral_radius(m) - max(abs(np.linalg.eigvals(m))))
        if err > 1e-7:
            return f"spectral radius off by {err:.3g}"
    return None


def _feasibility():
    rng = np.random.default_rng(2)
    for _ in range(50):
        spec = random_game(rng, require_sufficient=False)
        if check_sufficient(spec).ok and not check_necessary(spec).necessary_ok:
            return "sufficient condition held without the necessary one"
    spec = random_game(rng)
    rep = check_necessary(spec)
    b = qos_sinr(spec)
    err = np.max(np.abs(sinr_all(rep.min_power_vector, spec) / b - 1))
    if err > 1e-8:
        return f"minimal power vector misses the SINR targets by {err:.3g}"
    return None


def _brd():
    rng = np.random.default_rng(3)
    spec = random_game(rng)
    cfg = BrdConfig(epsilon=1e-16)
    starts = [random_feasible_start(spec, rng) for _ in range(3)]
    fixed = [run_brd(spec, start=s, cfg=cfg).powers for s in starts]
    spread = max(np.linalg.norm(f - fixed[0]) / np.linalg.norm(fixed[0]) for f in fixed)
    if spread > 1e-5:
        return f"fixed points differ by {spread:.3g}"
    if not verify_ne(spec, fixed[0]).is_ne:
        return "fixed point is not a Nash equilibrium"
    return None


def _mbi():
    rng = np.random.default_rng(4)
    spec = random_game(rng)
    ne = run_brd(spec, cfg=BrdConfig(epsilon=1e-16))
    rep = run_mbi_sum(spec, start=ne.powers)
    if np.any(np.diff(rep.objective_trace) > 0):
        return "sum-cost trace increased"
    if rep.cost_sum > cost_sum(ne.powers, spec):
        return "centralized cost above the equilibrium cost"
    rep = run_mbi_min(spec, cfg=MbiConfig())
    if np.any(np.diff(rep.objective_trace) > 0):
        return "max-delay trace increased"
    if any(abs(c) > 1e-10 * rep.cost_min for c in rep.consistency):
        return "t-block objective disagrees with the max-delay cost"
    return None


def _dinkelbach():
    res = dinkelbach(lambda x: (x - 2.0) ** 2 + 1.0, lambda x: x,
                     lambda lam: min(max(2.0 + lam / 2.0, 1.0), 3.0))
    if abs(res.x - math.sqrt(5.0)) > 1e-8 or res.iterations > 20:
        return f"ratio minimizer {res.x!r} after {res.iterations} iterations"
    return None


def _fit():
    if abs(fit_delta(1) - 1.0) > 1e-6:
        return "fit for single-bit packets is not 1"
    return None


CHECKS = {
    "success function properties": _success_properties,
    "spectral radius vs dense eigensolver": _spectral_radius,
    "feasibility logic": _feasibility,
    "best-response dynamics": _brd,
    "MBI descent": _mbi,
    "Dinkelbach": _dinkelbach,
    "delta fit": _fit,
}


def run(verbose: bool = True) -> list:
    """Run every check; returns the names of the failing ones."""
    failures = []
    for name, check in CHECKS.items():
        try:
            why = check()
        except Exception as exc:  # a crash is a failure, not an abort
            why = f"{type(exc).__name__}: {exc}"
        if why:
            failures.append(name)
        if verbose:
            print(f"{'FAIL' if why else 'ok  '}  {name}" + (f": {why}" if why else ""))
    return failures
