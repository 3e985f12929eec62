"""Feasibility of the QoS-constrained best responses.

Three levels of checking:

* ``check_sufficient``: offline, guarantees every best response is feasible
  whatever the other players do (worst case: everybody at full power);
* ``check_br_feasible``: online, exact test for one player given the
  current interference;
* ``check_necessary``: offline, joint feasibility of all QoS targets through
  the spectral radius of the normalized interference matrix.

QoS constraints are read as ``S(gamma_k) >= theta_k`` so that the boundary
power is itself feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NoFeasiblePoint, Singular
from .model import GameSpec, omega, sinr_all
from .numerics import solve_linear, spectral_radius

__all__ = [
    "SufficientReport",
    "BrFeasibility",
    "FeasibilityReport",
    "qos_sinr",
    "check_sufficient",
    "check_br_feasible",
    "check_necessary",
    "qos_satisfied",
    "find_feasible_start",
    "random_feasible_start",
]

SAFETY_FACTOR = 1.001


@dataclass(frozen=True)
class SufficientReport:
    ok: bool
    per_link: np.ndarray
    ceiling_ok: np.ndarray  # alpha_k > phi_k S^-1(theta_k)
    worst_case_power: np.ndarray  # required power when every other link is at p_max


@dataclass(frozen=True)
class BrFeasibility:
    feasible: bool
    p_min: float
    cause: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    sufficient_ok: bool
    necessary_ok: bool
    rho_F: float
    min_power_vector: np.ndarray | None
    per_link_margin: np.ndarray | None
    cause: str = ""


def qos_sinr(spec: GameSpec) -> np.ndarray:
    """SINR targets ``S_k^-1(theta_k)``."""
    return np.array([l.success.inverse(float(l.theta)) for l in spec.links])


def _ceiling_ok(spec: GameSpec, b: np.ndarray) -> np.ndarray:
    # S(alpha/phi) > theta  <=>  alpha > b phi ; phi = 0 always passes
    return spec.alpha > b * spec.phi


def check_sufficient(spec: GameSpec) -> SufficientReport:
    b = qos_sinr(spec)
    ceil_ok = _ceiling_ok(spec, b)
    worst = np.full(spec.K, np.inf)
    den = spec.alpha - b * spec.phi
    wc_omega = spec.sigma2 + spec.beta @ spec.p_max
    worst[ceil_ok] = b[ceil_ok] * wc_omega[ceil_ok] / den[ceil_ok]
    per_link = ceil_ok & (spec.p_max >= worst)
    return SufficientReport(bool(per_link.all()), per_link, ceil_ok, worst)


def check_br_feasible(k: int, p, spec: GameSpec) -> BrFeasibility:
    """Exact feasibility of link ``k``'s best response given the others' powers.

    Only ``p_{-k}`` matters; the entry ``p[k]`` is ignored.
    """
    link = spec.link(k)
    b = link.success.inverse(float(link.theta))
    den = link.alpha - b * link.phi
    if den <= 0.0:
        return BrFeasibility(False, np.inf, "self-interference ceiling below the QoS target")
    p = np.array(p, dtype=float)
    p[k] = 0.0
    p_min = b * omega(k, p, spec) / den
    if p_min > link.p_max:
        return BrFeasibility(False, p_min, "required power exceeds p_max")
    return BrFeasibility(True, p_min)


def check_necessary(spec: GameSpec) -> FeasibilityReport:
    suff = check_sufficient(spec)
    b = qos_sinr(spec)
    if not suff.ceiling_ok.all():
        bad = np.flatnonzero(~suff.ceiling_ok).tolist()
        return FeasibilityReport(False, False, np.inf, None, None,
                                 f"self-interference ceiling below the QoS target for links {bad}")
    scale = b / (spec.alpha - b * spec.phi)
    F = scale[:, None] * spec.beta  # zero diagonal inherited from beta
    S = scale * spec.sigma2
    rho_F = spectral_radius(F)
    if rho_F >= 1.0:
        return FeasibilityReport(suff.ok, False, rho_F, None, None,
                                 f"spectral radius rho_F = {rho_F:.6g} >= 1")
    try:
        x = solve_linear(F, S)
    except Singular as exc:
        return FeasibilityReport(suff.ok, False, rho_F, None, None, f"singular system: {exc}")
    margin = spec.p_max - x
    ok = bool(np.all(margin >= 0))
    cause = "" if ok else f"minimum powers exceed p_max for links {np.flatnonzero(margin < 0).tolist()}"
    return FeasibilityReport(suff.ok, ok, rho_F, x, margin, cause)


def qos_satisfied(p, spec: GameSpec, rtol: float = 1e-9) -> np.ndarray:
    """Per-link truth of ``S(gamma_k) >= theta_k`` up to ``rtol`` in SINR."""
    g = sinr_all(p, spec)
    return g >= qos_sinr(spec) * (1.0 - rtol)


def find_feasible_start(spec: GameSpec) -> np.ndarray:
    """A power vector meeting every QoS target inside the box.

    Full power when the sufficient condition holds, else the minimal power
    vector inflated by 0.1 % and clipped to the box.
    """
    if check_sufficient(spec).ok:
        return np.array(spec.p_max)
    rep = check_necessary(spec)
    if not rep.necessary_ok:
        raise NoFeasiblePoint(f"no jointly feasible power vector: {rep.cause}")
    p = np.minimum(rep.min_power_vector * SAFETY_FACTOR, spec.p_max)
    if not qos_satisfied(p, spec).all():
        p = np.array(rep.min_power_vector)
        if not qos_satisfied(p, spec).all():
            raise NoFeasiblePoint("minimal power vector fails re-verification")
    return p


def random_feasible_start(spec: GameSpec, rng: np.random.Generator, tries: int = 60) -> np.ndarray:
    """Random point of the (polyhedral) QoS-feasible box.

    Draws uniformly between the minimal power vector and ``p_max``; rejected
    draws are pulled towards a known feasible point, which stays feasible by
    convexity of the constraint set.
    """
    anchor = find_feasible_start(spec)
    rep = check_necessary(spec)
    lo = rep.min_power_vector * SAFETY_FACTOR if rep.necessary_ok else np.zeros(spec.K)
    lo = np.minimum(lo, spec.p_max)
    p = lo + rng.uniform(size=spec.K) * (spec.p_max - lo)
    for _ in range(tries):
        if qos_satisfied(p, spec).all():
            return p
        p = 0.5 * (p + anchor)
    return anchor
