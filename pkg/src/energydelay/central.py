"""Centralized benchmark solvers.

* a generic maximum-block-improvement (MBI) driver: at every iteration all
  blocks are solved against the frozen iterate and only the one with the
  largest decrement is moved;
* the sum-cost MBI over the power blocks;
* the max-delay MBI over the power blocks plus the auxiliary ``t`` block;
* Dinkelbach's method for single-ratio fractional programs.

QoS constraints are not imposed here: the network costs are minimized over
the power box only, and an unstable queue is priced at ``+inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    AllCandidatesInfeasible,
    BlockSolverFailure,
    EmptyInterval,
    InnerSolverFailure,
    NonpositiveDenominator,
    QueueUnstable,
)
from .model import GameSpec, LinkSpec, as_power_vector, success_all, success_derivative_all
from .numerics import BracketedRootProblem, bisect

__all__ = [
    "MbiConfig",
    "CentralReport",
    "DinkelbachResult",
    "network_energy",
    "mean_delay",
    "max_delay",
    "cost_sum",
    "cost_min",
    "min_variant_objective",
    "sinr_gradient",
    "success_gradient",
    "sum_residual",
    "min_residual",
    "stationary_points_sum",
    "solve_block_sum",
    "mbi_generic",
    "run_mbi_sum",
    "solve_block_t",
    "block_interval",
    "solve_block_min",
    "run_mbi_min",
    "kkt_residual",
    "dinkelbach",
    "energy_efficient_power",
]


@dataclass(frozen=True)
class MbiConfig:
    """Settings of the MBI solvers.

    ``epsilon`` is relative: iterations stop once an accepted update lowers
    the objective by at most ``epsilon * |objective|``.  Physical costs are
    of the order of ``1/R`` so an absolute threshold would be meaningless
    across scenarios.
    """

    epsilon: float = 1e-12
    max_iters: int = 2000
    stationary_tol: float = 1e-9
    grid_points: int = 512

    def __post_init__(self):
        if not self.epsilon > 0 or not self.stationary_tol > 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grid_points < 8:
            raise ValueError("grid_points must be at least 8")


@dataclass
class CentralReport:
    powers: np.ndarray
    objective_trace: list
    kkt_residual: float
    chosen_blocks: list
    block_decrements: list
    iterations: int
    termination: str
    t_trace: list | None = None
    states: list = field(default_factory=list, repr=False)
    cost_sum: float = math.nan
    cost_min: float = math.nan
    consistency: list = field(default_factory=list)  # t-block objective minus max-delay cost at each t update

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


# ---------------------------------------------------------------- costs


def _batch_state(p, spec: GameSpec):
    """SINR, success and interference-plus-noise for power rows ``p`` (n x K)."""
    p = np.asarray(p, dtype=float)
    d = spec.sigma2 + spec.phi * p + p @ spec.beta.T  # phi p + omega
    gamma = spec.alpha * p / d
    return gamma, success_all(gamma, spec), d


def network_energy(p, spec: GameSpec) -> float:
    """Total consumed power over total successful throughput."""
    p = as_power_vector(p, spec.K)
    _, s, _ = _batch_state(p, spec)
    tot = s.sum()
    if tot <= 0.0:
        return math.inf
    return float((p + spec.p_c).sum() / (spec.common_rate * tot))


def _gaps(p, spec: GameSpec, strict: bool):
    _, s, _ = _batch_state(p, spec)
    gap = s - spec.lam
    if np.any(gap <= 0.0):
        if strict:
            bad = np.flatnonzero(gap <= 0.0).tolist()
            raise QueueUnstable(f"queues of links {bad} are unstable")
        return None, s
    return gap, s


def mean_delay(p, spec: GameSpec, strict: bool = True) -> float:
    """Average of the per-link delays."""
    gap, _ = _gaps(as_power_vector(p, spec.K), spec, strict)
    if gap is None:
        return math.inf
    return float(np.mean(1.0 / (spec.rate * gap)))


def max_delay(p, spec: GameSpec, strict: bool = True) -> float:
    gap, _ = _gaps(as_power_vector(p, spec.K), spec, strict)
    if gap is None:
        return math.inf
    return float(np.max(1.0 / (spec.rate * gap)))


def cost_sum(p, spec: GameSpec, strict: bool = True) -> float:
    """Weighted mean delay plus network energy cost.

    ``(1/(K R)) sum rho_k / (S_k - lam_k) + sum(p_k + P_C,k) / (R sum S_k)``.
    """
    p = as_power_vector(p, spec.K)
    gap, s = _gaps(p, spec, strict)
    if gap is None:
        return math.inf
    R = spec.common_rate
    return float(np.sum(spec.rho / gap) / (spec.K * R) + (p + spec.p_c).sum() / (R * s.sum()))


def cost_min(p, spec: GameSpec, strict: bool = True) -> float:
    """Worst-link delay weighted by ``rho`` plus network energy cost."""
    p = as_power_vector(p, spec.K)
    gap, s = _gaps(p, spec, strict)
    if gap is None:
        return math.inf
    R = spec.common_rate
    return float(spec.common_rho / (R * gap.min()) + (p + spec.p_c).sum() / (R * s.sum()))


def min_variant_objective(x, spec: GameSpec) -> float:
    """``rho / t + energy`` on the extended vector ``(p_1, ..., p_K, t)``."""
    x = np.asarray(x, dtype=float)
    t = x[-1]
    if not t > 0.0:
        return math.inf
    return spec.common_rho / t + network_energy(x[:-1], spec)


# ------------------------------------------------------------ derivatives


def _column_grid(k: int, p: np.ndarray, xs: np.ndarray) -> np.ndarray:
    P = np.tile(p, (xs.size, 1))
    P[:, k] = xs
    return P


def _sinr_gradient(k: int, P: np.ndarray, spec: GameSpec, gamma, d):
    """d gamma_l / d p_k for every row of ``P``."""
    dg = -spec.alpha * P * spec.beta[:, k] / (d * d)
    omega_k = d[:, k] - spec.phi[k] * P[:, k]
    dg[:, k] = spec.alpha[k] * omega_k / (d[:, k] ** 2)
    return dg


def sinr_gradient(k: int, p, spec: GameSpec) -> np.ndarray:
    """Analytic ``d gamma_l / d p_k`` for every link ``l``."""
    p = as_power_vector(p, spec.K)
    P = p[None, :]
    gamma, _, d = _batch_state(P, spec)
    return _sinr_gradient(k, P, spec, gamma, d)[0]


def success_gradient(k: int, p, spec: GameSpec) -> np.ndarray:
    """Analytic ``dS_l / dp_k`` for every link ``l``."""
    p = as_power_vector(p, spec.K)
    P = p[None, :]
    gamma, _, d = _batch_state(P, spec)
    dg = _sinr_gradient(k, P, spec, gamma, d)
    return (success_derivative_all(gamma, spec) * dg)[0]


def _residuals(k: int, p: np.ndarray, spec: GameSpec, xs: np.ndarray, with_delay: bool):
    """Residuals ``R dc/dp_k`` along the ``k``-th coordinate.

    Entries where some queue is unstable come back as NaN.
    """
    beta_k = spec.beta[:, k]
    d0 = spec.sigma2 + spec.phi * p + spec.beta @ p
    dx = xs - p[k]
    d = d0 + dx[:, None] * beta_k
    d[:, k] += spec.phi[k] * dx
    num = np.broadcast_to(spec.alpha * p, d.shape).copy()
    num[:, k] = spec.alpha[k] * xs
    gamma = num / d
    e = np.exp(-spec.delta * gamma)
    s = 1.0 - e
    # d gamma_l / d p_k: -gamma_l beta_lk / d_l off the diagonal, alpha omega / d^2 on it
    dg = -gamma * beta_k / d
    dk = d[:, k]
    dg[:, k] = spec.alpha[k] * (dk - spec.phi[k] * xs) / (dk * dk)
    ds = spec.delta * e * dg
    tot_s = s.sum(axis=1)
    tot_p = spec.p_c.sum() + p.sum() + dx
    r = (tot_s - ds.sum(axis=1) * tot_p) / (tot_s * tot_s)
    if with_delay:
        gap = s - spec.lam
        bad = (gap <= 0.0).any(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            r -= (spec.rho * ds / (gap * gap)).sum(axis=1) / spec.K
        r[bad] = np.nan
    return r


def sum_residual(k: int, p, spec: GameSpec) -> float:
    """``R * dc_sum / dp_k`` at ``p``."""
    p = as_power_vector(p, spec.K)
    return float(_residuals(k, p, spec, np.array([p[k]]), True)[0])


def min_residual(k: int, p, spec: GameSpec) -> float:
    """Derivative in ``p_k`` of total power over total success."""
    p = as_power_vector(p, spec.K)
    return float(_residuals(k, p, spec, np.array([p[k]]), False)[0])


def _scan_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """Interior points of ``(lo, hi)``: log-spaced near ``lo`` plus a linear tail."""
    width = hi - lo
    n_log = (3 * n) // 4
    logs = lo + width * np.logspace(-10, 0, n_log, endpoint=False)
    lin = lo + width * np.linspace(0.0, 1.0, n - n_log + 2)[1:-1]
    g = np.unique(np.concatenate([logs, lin]))
    return g[(g > lo) & (g < hi)]


def _roots(k, p, spec, lo, hi, with_delay, cfg: MbiConfig) -> list:
    if not hi > lo:
        return []
    xs = _scan_grid(lo, hi, cfg.grid_points)
    r = _residuals(k, p, spec, xs, with_delay)
    ok = np.isfinite(r)
    flips = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(r[:-1]) * np.sign(r[1:]) < 0))
    exact = xs[ok & (r == 0.0)].tolist()

    out = _refine(lambda x: _residuals(k, p, spec, x, with_delay),
                  xs[flips], xs[flips + 1], r[flips], r[flips + 1], cfg.stationary_tol * 1e-4 * hi)
    return sorted(set(out.tolist() + exact))


def _refine(fn, lo, hi, r_lo, r_hi, tol_x, max_iter=200) -> np.ndarray:
    """Illinois (bracketed regula falsi) run on every bracket at once.

    ``fn`` maps an array of points to residuals.  Both ends of each bracket
    have finite residuals of opposite sign; the stable region is an interval
    in ``p_k`` so no NaN can appear inside.
    """
    a, b = lo.astype(float), hi.astype(float)
    fa, fb = r_lo.astype(float), r_hi.astype(float)
    done = np.zeros(a.size, dtype=bool)
    for _ in range(max_iter):
        done |= np.abs(b - a) <= tol_x
        if done.all():
            break
        c = b - fb * (b - a) / (fb - fa)
        # fall back to the midpoint if the secant leaves the bracket
        bad = ~((c > np.minimum(a, b)) & (c < np.maximum(a, b)))
        c = np.where(bad, 0.5 * (a + b), c)
        fc = fn(c)
        hit = fc == 0.0
        flip = np.sign(fc) != np.sign(fb)
        a = np.where(done, a, np.where(flip, b, a))
        fa = np.where(done, fa, np.where(flip, fb, 0.5 * fa))
        b = np.where(done, b, c)
        fb = np.where(done, fb, fc)
        a = np.where(hit & ~done, c, a)
        done |= hit
    return np.where(np.abs(fa) < np.abs(fb), a, b)


def stationary_points_sum(k: int, p, spec: GameSpec, cfg: MbiConfig = MbiConfig()) -> list:
    """Zeros of ``dc_sum/dp_k`` in ``(0, P_max,k)`` with the other powers fixed."""
    p = as_power_vector(p, spec.K)
    return _roots(k, p, spec, 0.0, float(spec.p_max[k]), True, cfg)


def _argmin_candidates(cands: Sequence[float], values: np.ndarray) -> int:
    # candidates are sorted ascending, so argmin breaks ties towards less power
    return int(np.argmin(values))


def solve_block_sum(k: int, p, spec: GameSpec, cfg: MbiConfig = MbiConfig()) -> float:
    """Best ``p_k`` for the sum cost among the endpoints and stationary points."""
    p = as_power_vector(p, spec.K)
    cands = sorted({0.0, float(spec.p_max[k]), *stationary_points_sum(k, p, spec, cfg)})
    vals = np.array([cost_sum(_with(p, k, c), spec, strict=False) for c in cands])
    if not np.isfinite(vals).any():
        raise AllCandidatesInfeasible(
            f"every candidate power of link {k} leaves some queue unstable", block=k)
    return cands[_argmin_candidates(cands, vals)]


def _with(p: np.ndarray, k: int, v: float) -> np.ndarray:
    q = p.copy()
    q[k] = v
    return q


# -------------------------------------------------------------- MBI driver


def mbi_generic(objective: Callable[[np.ndarray], float],
                block_solvers: Sequence[Callable[[np.ndarray], float]],
                start, cfg: MbiConfig = MbiConfig()) -> CentralReport:
    """Maximum block improvement over scalar blocks.

    ``block_solvers[i](x)`` returns the best value of coordinate ``i`` with
    the rest of ``x`` frozen.  An ``EmptyInterval`` from a solver means that
    block cannot improve right now.
    """
    x = np.array(start, dtype=float)
    if x.ndim != 1 or x.size != len(block_solvers):
        raise ValueError("start must be a vector with one entry per block")
    g = float(objective(x))
    if not math.isfinite(g):
        raise QueueUnstable(f"objective is not finite at the start ({g!r})")
    trace, chosen, decs, states = [g], [], [], [x.copy()]
    termination = "max_iters"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        vals = np.full(x.size, math.inf)
        moves = x.copy()
        for i, solve in enumerate(block_solvers):
            try:
                q = float(solve(x))
            except EmptyInterval:
                continue
            except BlockSolverFailure as exc:
                if exc.block is None:
                    exc.block = i
                raise
            except Exception as exc:
                raise BlockSolverFailure(f"block {i}: {exc}", block=i) from exc
            vals[i] = objective(_with(x, i, q))
            moves[i] = q
        dec = g - vals
        decs.append(dec)
        i = int(np.argmax(dec))  # first maximum, i.e. lowest index on ties
        if not dec[i] > 0.0:
            termination = "stationary"
            break
        x[i] = moves[i]
        g_new = float(vals[i])
        trace.append(g_new)
        chosen.append(i)
        states.append(x.copy())
        converged = g - g_new <= cfg.epsilon * abs(g)
        g = g_new
        if converged:
            termination = "converged"
            break
    return CentralReport(
        powers=x, objective_trace=trace, kkt_residual=math.nan, chosen_blocks=chosen,
        block_decrements=decs, iterations=it, termination=termination, states=states,
    )


def kkt_residual(objective: Callable[[np.ndarray], float], p, upper, rel_step: float = 1e-6) -> float:
    """Box-projected gradient residual with finite differences.

    Each coordinate is scaled to ``[0, 1]`` and the gradient is divided by
    the objective value, so the result is a dimensionless measure of how far
    one projected gradient step moves the point.
    """
    p = np.asarray(p, dtype=float)
    upper = np.asarray(upper, dtype=float)
    c = objective(p)
    out = 0.0
    for k in range(p.size):
        h = rel_step * upper[k]
        if p[k] - h < 0.0:
            d = (objective(_with(p, k, p[k] + h)) - c) / h
        elif p[k] + h > upper[k]:
            d = (c - objective(_with(p, k, p[k] - h))) / h
        else:
            d = (objective(_with(p, k, p[k] + h)) - objective(_with(p, k, p[k] - h))) / (2 * h)
        x = p[k] / upper[k]
        step = d * upper[k] / abs(c)
        out = max(out, abs(min(max(x - step, 0.0), 1.0) - x))
    return out


def _start(spec: GameSpec, start) -> np.ndarray:
    if start is None:
        return np.array(spec.p_max)
    p = as_power_vector(start, spec.K)
    if np.any(p < 0) or np.any(p > spec.p_max * (1 + 1e-12)):
        raise ValueError("start must lie inside the power box")
    return np.minimum(p, spec.p_max)


def run_mbi_sum(spec: GameSpec, start=None, cfg: MbiConfig = MbiConfig()) -> CentralReport:
    """Minimize the sum cost over the power box; default start is full power."""
    p0 = _start(spec, start)
    solvers = [lambda x, k=k: solve_block_sum(k, x, spec, cfg) for k in range(spec.K)]
    rep = mbi_generic(lambda x: cost_sum(x, spec, strict=False), solvers, p0, cfg)
    rep.kkt_residual = kkt_residual(lambda x: cost_sum(x, spec, strict=False), rep.powers, spec.p_max)
    rep.cost_sum = rep.objective
    if np.all(spec.rho == spec.rho[0]):
        rep.cost_min = cost_min(rep.powers, spec, strict=False)
    return rep


# ------------------------------------------------------ max-delay variant


def solve_block_t(p, spec: GameSpec) -> float:
    """Optimal auxiliary variable, ``t = R min_l (S_l - lam_l)``.

    The rate factor keeps ``t`` in the same units as the constraint
    ``t <= R (S_l - lam_l)``.
    """
    gap, _ = _gaps(as_power_vector(p, spec.K), spec, strict=True)
    return float(spec.common_rate * gap.min())


def _qos_levels(t: float, spec: GameSpec) -> np.ndarray:
    """SINR each link needs so that ``R (S_l - lam_l) >= t``."""
    target = t / spec.common_rate + spec.lam
    b = np.empty(spec.K)
    for l, link in enumerate(spec.links):
        y = float(target[l])
        if y >= 1.0:
            raise EmptyInterval(f"t={t!r} needs a success probability of {y!r} on link {l}")
        b[l] = 0.0 if y <= 0.0 else link.success.inverse(y)
    return b


def block_interval(k: int, p, t: float, spec: GameSpec) -> tuple[float, float, np.ndarray]:
    """Feasible range of ``p_k`` for a fixed ``t`` and the other powers.

    Returns ``(floor, ceiling, per_link_ceilings)``; per-link ceilings are
    ``inf`` where link ``l`` does not hear link ``k``.
    """
    p = as_power_vector(p, spec.K)
    b = _qos_levels(t, spec)
    q = _with(p, k, 0.0)
    omega_k = spec.sigma2[k] + spec.beta[k] @ q
    den = spec.alpha[k] - b[k] * spec.phi[k]
    if den <= 0.0:
        raise EmptyInterval(f"link {k} cannot reach the SINR {b[k]!r} under self-interference", block=k)
    floor = b[k] * omega_k / den
    ceil_l = np.full(spec.K, math.inf)
    for l in range(spec.K):
        bl = spec.beta[l, k]
        if l == k or bl <= 0.0 or b[l] <= 0.0:
            continue
        # q has p_k = 0 and beta has a zero diagonal, so this is psi_{l,k}
        psi = spec.sigma2[l] + spec.phi[l] * p[l] + spec.beta[l] @ q
        ceil_l[l] = spec.alpha[l] * p[l] / (b[l] * bl) - psi / bl
    return float(floor), float(min(spec.p_max[k], ceil_l.min())), ceil_l


def solve_block_min(k: int, p, t: float, spec: GameSpec, cfg: MbiConfig = MbiConfig()) -> float:
    """Best ``p_k`` for total power over total success inside the feasible range."""
    p = as_power_vector(p, spec.K)
    lo, hi, _ = block_interval(k, p, t, spec)
    if lo > hi:
        if lo - hi <= 1e-12 * max(hi, 1e-300):
            lo = hi
        else:
            raise EmptyInterval(f"floor {lo!r} exceeds ceiling {hi!r} for link {k}", block=k)
    cands = sorted({lo, hi, *_roots(k, p, spec, lo, hi, False, cfg)})
    vals = np.array([_energy_row(_with(p, k, c), spec) for c in cands])
    if not np.isfinite(vals).any():
        raise AllCandidatesInfeasible(f"no finite candidate for link {k}", block=k)
    return cands[_argmin_candidates(cands, vals)]


def _energy_row(p, spec):
    # total power over total success; the 1/R factor does not move the argmin
    _, s, _ = _batch_state(p, spec)
    tot = s.sum()
    return math.inf if tot <= 0.0 else float((p + spec.p_c).sum() / tot)


def run_mbi_min(spec: GameSpec, start=None, cfg: MbiConfig = MbiConfig()) -> CentralReport:
    """Minimize the max-delay cost through the auxiliary variable ``t``."""
    spec.common_rho  # uniform rho required
    p0 = _start(spec, start)
    K = spec.K
    x0 = np.append(p0, solve_block_t(p0, spec))
    solvers = [lambda x, k=k: solve_block_min(k, x[:K], x[K], spec, cfg) for k in range(K)]
    solvers.append(lambda x: solve_block_t(x[:K], spec))
    obj = lambda x: min_variant_objective(x, spec)  # noqa: E731
    rep = mbi_generic(obj, solvers, x0, cfg)
    rep.t_trace = [float(s[K]) for s in rep.states]
    # the start value of t is itself a t-block solve
    t_states = [rep.states[0]] + [s for s, blk in zip(rep.states[1:], rep.chosen_blocks) if blk == K]
    rep.consistency = [min_variant_objective(s, spec) - cost_min(s[:K], spec) for s in t_states]
    rep.powers = rep.powers[:K]
    rep.kkt_residual = kkt_residual(lambda x: cost_min(x, spec, strict=False), rep.powers, spec.p_max)
    rep.cost_sum = cost_sum(rep.powers, spec, strict=False)
    rep.cost_min = cost_min(rep.powers, spec, strict=False)
    return rep


# -------------------------------------------------------------- Dinkelbach


@dataclass
class DinkelbachResult:
    x: object
    ratio: float
    iterations: int
    lambdas: list
    F_values: list


def dinkelbach(f: Callable, g: Callable, minimizer: Callable, tol: float = 1e-10,
               max_iter: int = 100) -> DinkelbachResult:
    """Minimize ``f(x)/g(x)`` given an exact minimizer of ``f - lam g``.

    Starts from ``lam = 0`` and stops once ``|f(x) - lam g(x)| < tol``.
    """
    lam = 0.0
    lambdas, Fs = [lam], []
    x = None
    for it in range(1, max_iter + 1):
        try:
            x = minimizer(lam)
        except Exception as exc:
            raise InnerSolverFailure(f"inner minimization failed at lambda={lam!r}: {exc}") from exc
        gx = float(g(x))
        if not gx > 0.0:
            raise NonpositiveDenominator(f"g(x) = {gx!r} is not positive")
        fx = float(f(x))
        F = fx - lam * gx
        Fs.append(F)
        lam = fx / gx
        lambdas.append(lam)
        if abs(F) < tol:
            return DinkelbachResult(x, lam, it, lambdas, Fs)
    return DinkelbachResult(x, lam, max_iter, lambdas, Fs)


def energy_efficient_power(link: LinkSpec, omega_k: float, tol: float = 1e-12) -> DinkelbachResult:
    """Power minimizing ``(p + P_C) / (R S(gamma(p)))`` on ``[p_lo, P_max]``.

    ``p_lo = 1e-9 P_max`` keeps the denominator positive.  The numerator is
    affine and the denominator concave in ``p``, so every Dinkelbach
    subproblem is convex and is solved by bisection on its monotone
    derivative.
    """
    s, a, phi, R = link.success, link.alpha, link.phi, link.rate

    def gamma(p):
        return a * p / (phi * p + omega_k)

    def sub_grad(p, lam):
        d = phi * p + omega_k
        return 1.0 - lam * R * s.derivative(gamma(p)) * a * omega_k / (d * d)

    p_lo = 1e-9 * link.p_max

    def minimizer(lam):
        if sub_grad(link.p_max, lam) <= 0.0:
            return float(link.p_max)
        if sub_grad(p_lo, lam) >= 0.0:
            return p_lo
        return bisect(BracketedRootProblem(lambda p: sub_grad(p, lam), p_lo, float(link.p_max)))

    return dinkelbach(lambda p: p + link.p_c, lambda p: R * s.value(gamma(p)), minimizer, tol=tol)
