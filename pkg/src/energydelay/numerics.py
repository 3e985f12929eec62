"""Scalar root finding, spectral radius, linear solves and finite differences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import ExpansionFailed, NoSignChange, Singular

__all__ = [
    "BracketedRootProblem",
    "bisect",
    "expand_bracket",
    "spectral_radius",
    "solve_linear",
    "central_diff",
]


@dataclass(frozen=True)
class BracketedRootProblem:
    """A monotone scalar residual with a sign change on ``[lo, hi]``.

    Iteration stops when ``|residual| <= tol_f`` or the bracket is narrower
    than ``tol_x``; with both at zero it runs until the floats stop moving.
    """

    residual: Callable[[float], float]
    lo: float
    hi: float
    tol_x: float = 0.0
    tol_f: float = 0.0
    max_iter: int = 2000


def bisect(problem: BracketedRootProblem, derivative: Callable[[float], float] | None = None) -> float:
    """Find the root of a bracketed residual.

    Plain bisection unless ``derivative`` is given, in which case Newton
    steps are tried first and replaced by bisection whenever they leave the
    current bracket.  Deterministic for identical inputs.
    """
    f = problem.residual
    lo, hi = float(problem.lo), float(problem.hi)
    if lo > hi:
        lo, hi = hi, lo
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo < 0) == (f_hi < 0) or math.isnan(f_lo) or math.isnan(f_hi):
        raise NoSignChange(f"residual has the same sign at {lo!r} ({f_lo!r}) and {hi!r} ({f_hi!r})")
    # orient so that the residual is negative at lo
    sign = 1.0 if f_lo < 0 else -1.0
    x = lo + 0.5 * (hi - lo)
    for _ in range(problem.max_iter):
        fx = sign * f(x)
        if abs(fx) <= problem.tol_f:
            return x
        if fx < 0:
            lo = x
        else:
            hi = x
        if hi - lo <= problem.tol_x:
            break
        mid = lo + 0.5 * (hi - lo)
        if mid <= lo or mid >= hi:
            break
        nxt = mid
        if derivative is not None:
            d = sign * derivative(x)
            if d > 0 and math.isfinite(d):
                cand = x - fx / d
                if lo < cand < hi:
                    nxt = cand
        x = nxt
    # best of the final bracket
    f_lo, f_hi = abs(f(lo)), abs(f(hi))
    return lo if f_lo <= f_hi else hi


def expand_bracket(residual: Callable[[float], float], lo: float, hint: float,
                   factor: float = 2.0, max_doublings: int = 200,
                   cap: float | None = None) -> tuple[float, float]:
    """Grow ``hint`` geometrically until the residual turns positive.

    The residual must be negative just above ``lo``.  Returns a bracket
    ``(lo', hi)`` where ``lo'`` is the last point seen with a negative
    residual (never below ``lo``).
    """
    x = float(hint)
    if not x > lo:
        x = lo + max(abs(lo), 1.0)
    last_neg = float(lo)
    for _ in range(max_doublings + 1):
        if cap is not None and x > cap:
            raise ExpansionFailed(f"bracket exceeded cap {cap!r} without a sign change")
        r = residual(x)
        if r > 0:
            return last_neg, x
        if math.isnan(r):
            raise ExpansionFailed(f"residual is NaN at {x!r}")
        last_neg = x
        x = lo + (x - lo) * factor if lo >= 0 else x * factor
    raise ExpansionFailed(f"no sign change after {max_doublings} expansions (last x={x!r})")


def _growth_estimate(m: np.ndarray, x: np.ndarray, steps: int) -> float:
    """Geometric-mean growth of ``|M^n x|_1``; exact zero for nilpotent hits."""
    total = 0.0
    for _ in range(steps):
        y = m @ x
        n = float(y.sum())
        if n == 0.0:
            return 0.0
        total += math.log(n)
        x = y / n
    return math.exp(total / steps)


def spectral_radius(m, tol: float = 1e-13, max_iter: int = 10_000, seed: int = 0) -> float:
    """Spectral radius of a non-negative square matrix by power iteration.

    A short unshifted run gives a rough estimate ``r``; the main run then
    iterates on ``M + r I``, which makes the Perron root the unique dominant
    eigenvalue even for periodic matrices while keeping the spectral gap
    wide on badly scaled ones.  Stops on Collatz-Wielandt bounds or on
    stagnation of the 1-norm quotient; one restart from a fresh random
    vector if neither criterion fired.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError("matrix must be finite and non-negative")
    n = m.shape[0]
    if n == 0 or not np.any(m):
        return 0.0
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(0.5, 1.5, size=n)
    shift = _growth_estimate(m, x0 / x0.sum(), 4 * n + 60)
    if shift == 0.0:
        return 0.0
    a = m + shift * np.eye(n)
    best = None
    for attempt in range(2):
        x = x0 / x0.sum() if attempt == 0 else rng.uniform(0.5, 1.5, size=n)
        x /= x.sum()
        prev = math.inf
        est = 0.0
        for it in range(max_iter):
            y = a @ x
            est = float(y.sum())  # x sums to one
            live = x > 1e-300
            ratios = y[live] / x[live]
            lo_b, hi_b = ratios.min(), ratios.max()
            if live.all() and hi_b - lo_b <= tol * hi_b:
                return max(0.5 * (lo_b + hi_b) - shift, 0.0)
            if abs(est - prev) <= tol * est and it > 50:
                return max(est - shift, 0.0)
            prev = est
            x = y / est
        best = est if best is None else 0.5 * (best + est)
    return max(best - shift, 0.0)


def solve_linear(m, rhs) -> np.ndarray:
    """Solve ``(I - m) x = rhs``."""
    m = np.asarray(m, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    a = np.eye(m.shape[0]) - m
    try:
        x = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise Singular("solution is not finite")
    return x


def central_diff(f: Callable[[float], float], x: float, h: float | None = None) -> float:
    if h is None:
        h = max(1e-6, 1e-6 * abs(x))
    return (f(x + h) - f(x - h)) / (2.0 * h)
