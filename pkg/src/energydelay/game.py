"""Distributed power control: best responses and best-response dynamics.

Each player only knows its own parameters and its measured SINR.  The
interference level it faces is rebuilt from those two numbers, so the
per-player update never touches another player's power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, ExpansionFailed, Infeasible, InfeasibleStart, ModelViolation
from .feasibility import qos_satisfied, qos_sinr
from .model import (
    GameSpec,
    SuccessFunction,
    _lambda_power,
    _stationarity_residual,
    as_power_vector,
    link_cost,
    omega,
    sinr_all,
)
from .numerics import BracketedRootProblem, bisect, expand_bracket

__all__ = [
    "BrdConfig",
    "SolveReport",
    "LocalView",
    "Perturbation",
    "NeCheck",
    "best_response",
    "stationary_power",
    "reconstruct_omega",
    "run_brd",
    "check_uniqueness_condition",
    "uniqueness_grid",
    "verify_ne",
    "convergence_metric",
]

SCHEDULES = ("synchronous", "sequential", "randomized")
FALLBACKS = ("enforce", "relax-to-zero")

# lower bracket sits this far (relatively) above the stability power
_GUARD = 1e-9
# with lambda = 0 the bracket starts where the SINR is this small
_GAMMA_FLOOR = 1e-12
# perturbed players clip their rebuilt interference at this fraction of alpha p / gamma
_OMEGA_FLOOR_FRAC = 1e-3


@dataclass(frozen=True)
class BrdConfig:
    epsilon: float = 1e-4
    max_rounds: int = 500
    schedule: str = "synchronous"
    qos_fallback: str = "enforce"
    enforce_qos: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")
        if self.qos_fallback not in FALLBACKS:
            raise ValueError(f"qos_fallback must be one of {FALLBACKS}")


@dataclass
class SolveReport:
    powers: np.ndarray
    per_link_cost: np.ndarray
    rounds: int
    trace: list
    metric_trace: list
    termination: str  # converged | max_rounds | infeasible
    active_qos: frozenset = frozenset()
    relaxed: bool = False
    warnings: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"


@dataclass(frozen=True)
class LocalView:
    """What player ``k`` knows about itself, nothing about the others."""

    alpha: float
    phi: float
    success: SuccessFunction
    p_max: float
    p_c: float
    theta: float
    rho: float
    gamma_scale: float = 1.0  # multiplicative bias of the SINR measurement

    @classmethod
    def of(cls, link, alpha_scale=1.0, phi_scale=1.0, gamma_scale=1.0) -> "LocalView":
        return cls(link.alpha * alpha_scale, link.phi * phi_scale, link.success,
                   link.p_max, link.p_c, link.theta, link.rho, gamma_scale)


@dataclass(frozen=True)
class Perturbation:
    """Fixed relative errors in each player's ``alpha``, ``phi`` and SINR."""

    alpha_scale: np.ndarray
    phi_scale: np.ndarray
    gamma_scale: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, K: int, pct: float) -> "Perturbation":
        def one():
            mag = rng.uniform(0.0, pct / 100.0, size=K)
            sign = rng.choice([-1.0, 1.0], size=K)
            return 1.0 + sign * mag

        return cls(one(), one(), one())

    def views(self, spec: GameSpec) -> list:
        return [
            LocalView.of(l, self.alpha_scale[k], self.phi_scale[k], self.gamma_scale[k])
            for k, l in enumerate(spec.links)
        ]


def _residual_fn(view: LocalView, w: float):
    s, a, f, rho, pc = view.success, view.alpha, view.phi, view.rho, view.p_c
    return lambda x: _stationarity_residual(s, a, f, rho, pc, w, x)


def _stability_floor(view: LocalView, w: float) -> float:
    p_lam = _lambda_power(view.success, view.alpha, view.phi, w)
    if p_lam == 0.0:
        g = _GAMMA_FLOOR
        return g * w / (view.alpha - g * view.phi)
    return p_lam * (1.0 + _GUARD)


def _unclamped(view: LocalView, w: float, hint: float | None = None) -> float:
    floor = _stability_floor(view, w)
    if not math.isfinite(floor):
        raise Infeasible("queue cannot be stabilized at any power")
    res = _residual_fn(view, w)
    if res(floor) >= 0.0:
        return floor
    lo, hi = expand_bracket(res, floor, hint if hint is not None else max(2.0 * floor, view.p_max))
    return bisect(BracketedRootProblem(res, lo, hi))


def _best_response_local(view: LocalView, w: float, enforce_qos: bool) -> float:
    """Cost-minimizing power clamped to ``[floor, p_max]``.

    ``floor`` is the QoS power when QoS is enforced, else the queue
    stability power.  The stationarity residual is increasing, so its sign
    at the interval ends decides the clamp before any root search.
    """
    if enforce_qos:
        b = view.success.inverse(float(view.theta))
        den = view.alpha - b * view.phi
        if den <= 0.0:
            raise Infeasible("self-interference ceiling below the QoS target", cause="ceiling")
        floor = b * w / den
        if floor > view.p_max:
            raise Infeasible(f"QoS power {floor:.6g} exceeds p_max {view.p_max:.6g}", cause="p_max")
    else:
        floor = _stability_floor(view, w)
        if not floor < view.p_max:
            raise Infeasible("queue cannot be stabilized below p_max", cause="stability")
    res = _residual_fn(view, w)
    if res(view.p_max) <= 0.0:
        return view.p_max
    if res(floor) >= 0.0:
        return floor
    return bisect(BracketedRootProblem(res, floor, view.p_max))


def best_response(k: int, p, spec: GameSpec, enforce_qos: bool = True) -> float:
    """Player ``k``'s optimal power against the others' powers in ``p``.

    Raises :class:`Infeasible` when no power meets the QoS target (or, with
    QoS off, when the queue cannot be stabilized).
    """
    w = omega(k, p, spec)
    try:
        return _best_response_local(LocalView.of(spec.link(k)), w, enforce_qos)
    except Infeasible as exc:
        exc.link = k
        raise


def stationary_power(k: int, p, spec: GameSpec) -> float:
    """Unconstrained minimizer of link ``k``'s cost given the others' powers."""
    link = spec.link(k)
    try:
        return _unclamped(LocalView.of(link), omega(k, p, spec))
    except ExpansionFailed as exc:
        raise ModelViolation(f"link {k}: {exc}") from exc


def reconstruct_omega(k: int, p_k: float, gamma_k: float, spec: GameSpec) -> float:
    """Interference-plus-noise level from the own power and measured SINR."""
    link = spec.link(k)
    return _rebuild_omega(link.alpha, link.phi, p_k, gamma_k)


def _rebuild_omega(alpha, phi, p_k, gamma_k):
    if not (p_k > 0 and gamma_k > 0):
        raise DomainError("interference reconstruction needs p_k > 0 and gamma_k > 0")
    return alpha * p_k / gamma_k - phi * p_k


def _player_update(view: LocalView, p_k: float, gamma_k: float, enforce_qos: bool) -> float:
    # locality: only the player's own view, power and measured SINR enter here
    g = gamma_k * view.gamma_scale
    w = _rebuild_omega(view.alpha, view.phi, p_k, g)
    w = max(w, _OMEGA_FLOOR_FRAC * view.alpha * p_k / g)
    try:
        return _best_response_local(view, w, enforce_qos)
    except Infeasible as exc:
        # without QoS the only failure is an unstabilizable queue; full power
        # is the best effort and lets the others back off in later rounds
        if not enforce_qos and exc.cause == "stability":
            return view.p_max
        raise


def convergence_metric(p_new, p_old) -> float:
    """Squared relative change ``|p_n - p_{n-1}|^2 / |p_n|^2``."""
    p_new = np.asarray(p_new, dtype=float)
    den = float(p_new @ p_new)
    diff = p_new - np.asarray(p_old, dtype=float)
    num = float(diff @ diff)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return num / den


def _measured_sinr(k: int, p: np.ndarray, spec: GameSpec) -> float:
    pk = p[k]
    return pk * spec.alpha[k] / (spec.phi[k] * pk + spec.sigma2[k] + spec.beta[k] @ p)


def _round(p, spec, views, enforce_qos, schedule, rng):
    K = spec.K
    if schedule == "synchronous":
        gam = sinr_all(p, spec)
        return np.array([_player_update(views[k], p[k], gam[k], enforce_qos) for k in range(K)])
    order = range(K) if schedule == "sequential" else rng.permutation(K)
    p = p.copy()
    for k in order:
        p[k] = _player_update(views[k], p[k], _measured_sinr(k, p, spec), enforce_qos)
    return p


def run_brd(spec: GameSpec, start=None, cfg: BrdConfig = BrdConfig(),
            perturbation: Perturbation | None = None) -> SolveReport:
    """Iterate best responses until the squared relative power change is
    at most ``cfg.epsilon`` or ``cfg.max_rounds`` rounds have run.

    ``start`` defaults to full power.  Players update from their own
    parameters and measured SINR only; ``perturbation`` biases what they
    believe those are.  With ``qos_fallback='relax-to-zero'`` the first
    infeasible best response (or an infeasible start) drops QoS for the
    rest of the run; the round is repeated from the current iterate and the
    round count keeps running.
    """
    K = spec.K
    start = np.array(spec.p_max) if start is None else as_power_vector(start, K)
    if np.any(start > spec.p_max * (1 + 1e-12)) or np.any(start <= 0):
        raise InfeasibleStart("start must lie in (0, p_max]")
    views = perturbation.views(spec) if perturbation is not None else [LocalView.of(l) for l in spec.links]
    rng = np.random.default_rng(cfg.seed)
    notes = []
    for s in {l.success for l in spec.links}:
        ok, worst = check_uniqueness_condition(s)
        if not ok:
            notes.append(f"uniqueness condition fails (worst {worst:.3g}); fixed point may not be unique")
    enforce = cfg.enforce_qos
    relaxed = False
    if enforce and not qos_satisfied(start, spec).all():
        if cfg.qos_fallback == "relax-to-zero":
            enforce, relaxed = False, True
        else:
            raise InfeasibleStart("start violates a QoS constraint")

    p = start.copy()
    trace, metrics = [], []
    termination = "max_rounds"
    n = 0
    while n < cfg.max_rounds:
        try:
            new = _round(p, spec, views, enforce, cfg.schedule, rng)
        except Infeasible as exc:
            if enforce and cfg.qos_fallback == "relax-to-zero":
                # redo this round from the current iterate with QoS dropped
                enforce, relaxed = False, True
                notes.append(f"QoS relaxed in round {n + 1} after infeasible best response: {exc}")
                continue
            termination = "infeasible"
            notes.append(str(exc))
            break
        n += 1
        m = convergence_metric(new, p)
        p = new
        trace.append(p.copy())
        metrics.append(m)
        if m <= cfg.epsilon:
            termination = "converged"
            break

    gam = sinr_all(p, spec)
    costs = np.array([link_cost(l, p[k], gam[k], strict=False) for k, l in enumerate(spec.links)])
    unstable = np.flatnonzero(~np.isfinite(costs)).tolist()
    if unstable:
        notes.append(f"queues of links {unstable} are unstable at the final powers")
    active = frozenset()
    if enforce:
        b = qos_sinr(spec)
        active = frozenset(int(k) for k in np.flatnonzero(np.abs(gam - b) <= 1e-7 * b))
    return SolveReport(p, costs, n, trace, metrics, termination, active, relaxed, notes)


def uniqueness_grid(n: int = 10_000) -> np.ndarray:
    return np.concatenate(([0.0], np.logspace(-6, 6, n - 1)))


def check_uniqueness_condition(s: SuccessFunction, grid=None, tol: float = 1e-12) -> tuple[bool, float]:
    """Evaluate ``S S' - g S'^2 + g S S''`` on a grid; it must stay <= 0.

    Returns ``(passes, worst value)``.
    """
    g = uniqueness_grid() if grid is None else np.asarray(grid, dtype=float)
    sv = np.asarray(s.value(g), dtype=float)
    d1 = np.asarray(s.derivative(g), dtype=float)
    d2 = np.asarray(s.second_derivative(g), dtype=float)
    expr = sv * d1 - g * d1 * d1 + g * sv * d2
    worst = float(np.max(expr))
    return worst <= tol, worst


@dataclass(frozen=True)
class NeCheck:
    is_ne: bool
    gains: np.ndarray  # relative cost improvement available to each player


def verify_ne(spec: GameSpec, p, tol: float = 1e-6, enforce_qos: bool = True) -> NeCheck:
    """Check that no player can lower its cost by more than ``tol`` (relative)."""
    p = as_power_vector(p, spec.K)
    gam = sinr_all(p, spec)
    gains = np.empty(spec.K)
    for k, link in enumerate(spec.links):
        here = link_cost(link, p[k], gam[k], strict=False)
        try:
            br = best_response(k, p, spec, enforce_qos)
        except Infeasible:
            gains[k] = np.nan
            continue
        q = p.copy()
        q[k] = br
        there = link_cost(link, br, float(sinr_all(q, spec)[k]), strict=False)
        if math.isinf(here):
            gains[k] = math.inf if math.isfinite(there) else 0.0
        else:
            gains[k] = (here - there) / abs(here)
    ok = bool(np.all(np.isfinite(gains)) and np.all(gains <= tol))
    return NeCheck(ok, gains)
