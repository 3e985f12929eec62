"""SINR model, packet-success functions and per-link energy/delay costs.

All powers are in Watts, rates in bit/s and costs in Joule/bit (delay in
s/bit).  Every type here is immutable; every function is pure.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field, replace
import numpy as np

from .exceptions import DomainError, ModelViolation, QueueUnstable

__all__ = [
    "SuccessFunction",
    "SuccessModel",
    "LinkCoefficients",
    "LinkSpec",
    "GameSpec",
    "as_power_vector",
    "sinr",
    "sinr_all",
    "omega",
    "omega_all",
    "success",
    "success_inverse",
    "delay_cost",
    "energy_cost",
    "link_cost",
    "link_cost_derivative",
    "dgamma_dp_own",
    "lambda_power",
    "property_grid",
    "success_all",
    "success_derivative_all",
]


def property_grid(n: int = 241) -> np.ndarray:
    """Log grid on [1e-6, 1e6] with the origin prepended."""
    return np.concatenate(([0.0], np.logspace(-6, 6, n)))


class SuccessFunction(abc.ABC):
    """Probability of correct packet reception as a function of SINR.

    Subclasses provide the value, first and second derivatives and the
    inverse.  The solvers only rely on these four methods, so any curve that
    is zero at the origin, increasing, concave and sub-linear can be used.
    """

    @abc.abstractmethod
    def value(self, gamma): ...

    @abc.abstractmethod
    def derivative(self, gamma): ...

    @abc.abstractmethod
    def second_derivative(self, gamma): ...

    @abc.abstractmethod
    def inverse(self, y): ...

    def check_properties(self, grid=None, atol: float = 1e-12) -> tuple[bool, str]:
        """Check the four shape properties numerically on ``grid``.

        Returns ``(ok, reason)``; ``reason`` names the first failed property.
        """
        g = property_grid() if grid is None else np.asarray(grid, dtype=float)
        g = np.unique(g)
        s = np.asarray(self.value(g), dtype=float)
        ds = np.asarray(self.derivative(g), dtype=float)
        d2s = np.asarray(self.second_derivative(g), dtype=float)
        if np.any(s < -atol):
            return False, "negative success probability"
        if g[0] == 0.0 and abs(s[0]) > atol:
            return False, "S(0) != 0"
        pos = g > 0
        ratio = s[pos] / g[pos]
        if np.any(np.diff(ratio) > atol * np.maximum(1.0, ratio[:-1])):
            return False, "S(gamma)/gamma not decreasing"
        if g[-1] >= 1e3 and ratio[-1] > 1e-2 * ratio[0]:
            return False, "S(gamma)/gamma does not vanish"
        if np.any(ds < -atol):
            return False, "S not increasing"
        unsaturated = s < 1.0 - 1e-12
        if np.any(ds[unsaturated] <= 0.0):
            return False, "S not strictly increasing"
        if np.any(d2s > atol):
            return False, "S not concave"
        return True, ""


def _check_gamma(gamma):
    if np.any(np.asarray(gamma) < 0):
        raise DomainError(f"SINR must be non-negative, got {gamma!r}")


@dataclass(frozen=True)
class SuccessModel(SuccessFunction):
    """Exponential success curve ``S(g) = 1 - exp(-delta g)``.

    Also carries the packet arrival probability ``lam`` (per slot) and the
    link bit rate ``rate`` (bit/s), which together with ``S`` fix the
    queueing delay.
    """

    delta: float
    lam: float = 0.0
    rate: float = 1.0

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"delta must be positive and finite, got {self.delta}")
        if not (0.0 <= self.lam < 1.0):
            raise ValueError(f"lam must lie in [0, 1), got {self.lam}")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")
        ok, reason = self.check_properties()
        if not ok:
            raise ModelViolation(reason)

    def value(self, gamma):
        if isinstance(gamma, (float, int)):
            if gamma < 0:
                raise DomainError(f"SINR must be non-negative, got {gamma!r}")
            return -math.expm1(-self.delta * gamma)
        _check_gamma(gamma)
        return -np.expm1(-self.delta * np.asarray(gamma, dtype=float))

    def derivative(self, gamma):
        if isinstance(gamma, (float, int)):
            return self.delta * math.exp(-self.delta * gamma)
        return self.delta * np.exp(-self.delta * np.asarray(gamma, dtype=float))

    def second_derivative(self, gamma):
        if isinstance(gamma, (float, int)):
            return -self.delta * self.delta * math.exp(-self.delta * gamma)
        return -self.delta**2 * np.exp(-self.delta * np.asarray(gamma, dtype=float))

    def inverse(self, y):
        arr = np.asarray(y, dtype=float)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise DomainError(f"inverse defined on (0, 1) only, got {y!r}")
        if isinstance(y, (float, int)):
            return -math.log1p(-y) / self.delta
        return -np.log1p(-arr) / self.delta


@dataclass(frozen=True, eq=False)
class LinkCoefficients:
    """Coefficients of ``gamma = p a / (s2 + phi p + sum_j beta_j p_j)``.

    ``beta`` holds the cross gains towards this link's receiver, indexed by
    transmitter.  It has length K (own entry zero) or K-1.
    """

    alpha: float
    phi: float
    beta: np.ndarray
    sigma2: float

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).reshape(-1)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (self.phi >= 0 and math.isfinite(self.phi)):
            raise ValueError(f"phi must be non-negative, got {self.phi}")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if np.any(beta < 0) or not np.all(np.isfinite(beta)):
            raise ValueError("beta entries must be finite and non-negative")


@dataclass(frozen=True, eq=False)
class LinkSpec:
    coeffs: LinkCoefficients
    success: SuccessModel
    p_max: float
    p_c: float = 0.0
    theta: float = 0.5
    rho: float = 1.0

    def __post_init__(self):
        if not (self.p_max > 0 and math.isfinite(self.p_max)):
            raise ValueError(f"p_max must be positive, got {self.p_max}")
        if not (self.p_c >= 0 and math.isfinite(self.p_c)):
            raise ValueError(f"p_c must be non-negative, got {self.p_c}")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.theta > self.success.lam:
            raise ValueError(
                f"theta ({self.theta}) must exceed the arrival rate lambda "
                f"({self.success.lam}); the QoS target assumes theta > lambda"
            )
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be positive, got {self.rho}")

    # flat accessors keep solver code readable
    @property
    def alpha(self) -> float:
        return self.coeffs.alpha

    @property
    def phi(self) -> float:
        return self.coeffs.phi

    @property
    def sigma2(self) -> float:
        return self.coeffs.sigma2

    @property
    def lam(self) -> float:
        return self.success.lam

    @property
    def rate(self) -> float:
        return self.success.rate


_ARRAY_FIELDS = (
    "alpha", "phi", "sigma2", "delta", "lam", "rate", "p_max", "p_c", "theta", "rho",
)


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A full K-link instance with cached coefficient arrays.

    ``beta[k, j]`` is the gain from transmitter ``j`` into receiver ``k``;
    the diagonal is forced to zero.
    """

    links: tuple
    beta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        links = tuple(self.links)
        if not links:
            raise ValueError("a game needs at least one link")
        object.__setattr__(self, "links", links)
        K = len(links)
        beta = np.zeros((K, K))
        for k, link in enumerate(links):
            row = link.coeffs.beta
            if row.size == K:
                if row[k] != 0.0:
                    raise ValueError(f"link {k}: own cross-gain beta[{k}] must be zero")
                beta[k] = row
            elif row.size == K - 1:
                beta[k] = np.insert(row, k, 0.0)
            else:
                raise ValueError(f"link {k}: beta has length {row.size}, expected {K} or {K - 1}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        cols = {
            "alpha": [l.alpha for l in links],
            "phi": [l.phi for l in links],
            "sigma2": [l.sigma2 for l in links],
            "delta": [l.success.delta for l in links],
            "lam": [l.lam for l in links],
            "rate": [l.rate for l in links],
            "p_max": [l.p_max for l in links],
            "p_c": [l.p_c for l in links],
            "theta": [l.theta for l in links],
            "rho": [l.rho for l in links],
        }
        for name, values in cols.items():
            arr = np.array(values, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return len(self.links)

    def __len__(self):
        return len(self.links)

    def link(self, k: int) -> LinkSpec:
        return self.links[k]

    @property
    def common_rate(self) -> float:
        """Bit rate shared by all links (network-wide costs need one R)."""
        if not np.all(self.rate == self.rate[0]):
            raise ValueError("network costs require the same rate on every link")
        return float(self.rate[0])

    @property
    def common_rho(self) -> float:
        if not np.all(self.rho == self.rho[0]):
            raise ValueError("max-delay cost requires the same rho on every link")
        return float(self.rho[0])

    @classmethod
    def from_arrays(cls, alpha, phi, beta, sigma2, delta, lam=0.0, rate=1.0,
                    p_max=1.0, p_c=0.0, theta=0.5, rho=1.0) -> "GameSpec":
        """Build a spec from per-link arrays; scalars broadcast to all links."""
        alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
        K = alpha.size
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 0:
            beta = np.full((K, K), float(beta))
        beta = beta.reshape(K, K).copy()
        np.fill_diagonal(beta, 0.0)

        def col(x):
            return np.broadcast_to(np.asarray(x, dtype=float), (K,))

        phi, sigma2, delta, lam, rate = map(col, (phi, sigma2, delta, lam, rate))
        p_max, p_c, theta, rho = map(col, (p_max, p_c, theta, rho))
        links = [
            LinkSpec(
                coeffs=LinkCoefficients(float(alpha[k]), float(phi[k]), beta[k], float(sigma2[k])),
                success=SuccessModel(float(delta[k]), float(lam[k]), float(rate[k])),
                p_max=float(p_max[k]),
                p_c=float(p_c[k]),
                theta=float(theta[k]),
                rho=float(rho[k]),
            )
            for k in range(K)
        ]
        return cls(tuple(links))

    def to_arrays(self) -> dict:
        out = {name: np.array(getattr(self, name)) for name in _ARRAY_FIELDS}
        out["beta"] = np.array(self.beta)
        return out

    def replace(self, **changes) -> "GameSpec":
        """Copy with some per-link arrays (or scalars) replaced."""
        arrays = self.to_arrays()
        unknown = set(changes) - set(arrays)
        if unknown:
            raise TypeError(f"unknown fields: {sorted(unknown)}")
        arrays.update(changes)
        return GameSpec.from_arrays(**arrays)

    def with_link(self, k: int, **changes) -> "GameSpec":
        links = list(self.links)
        links[k] = replace(links[k], **changes)
        return GameSpec(tuple(links))


def as_power_vector(p, K: int | None = None) -> np.ndarray:
    """Validate and copy a power vector (finite, non-negative, length K)."""
    arr = np.array(p, dtype=float).reshape(-1)
    if K is not None and arr.size != K:
        raise ValueError(f"power vector has length {arr.size}, expected {K}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("power vector must be finite")
    if np.any(arr < 0):
        raise ValueError("powers must be non-negative")
    return arr


def omega(k: int, p, spec: GameSpec) -> float:
    """Noise plus interference seen by link ``k`` (excludes self-interference)."""
    p = np.asarray(p, dtype=float)
    return float(spec.sigma2[k] + spec.beta[k] @ p)


def omega_all(p, spec: GameSpec) -> np.ndarray:
    return spec.sigma2 + spec.beta @ np.asarray(p, dtype=float)


def sinr(k: int, p, spec: GameSpec) -> float:
    p = np.asarray(p, dtype=float)
    pk = float(p[k])
    return pk * spec.alpha[k] / (spec.phi[k] * pk + omega(k, p, spec))


def sinr_all(p, spec: GameSpec) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return p * spec.alpha / (spec.phi * p + omega_all(p, spec))


def success_all(gamma, spec: GameSpec) -> np.ndarray:
    """``S_k(gamma_k)`` for every link; ``gamma`` may carry leading batch axes."""
    return -np.expm1(-spec.delta * np.asarray(gamma, dtype=float))


def success_derivative_all(gamma, spec: GameSpec) -> np.ndarray:
    return spec.delta * np.exp(-spec.delta * np.asarray(gamma, dtype=float))


def success(s: SuccessFunction, gamma):
    return s.value(gamma)


def success_inverse(s: SuccessFunction, y):
    return s.inverse(y)


def delay_cost(link: LinkSpec, gamma: float) -> float:
    """Average time per reliably delivered bit, ``1 / (R (S - lam))``."""
    s = link.success.value(float(gamma))
    if s <= link.lam:
        raise QueueUnstable(f"S(gamma)={s:.6g} does not exceed lambda={link.lam:.6g}")
    return 1.0 / (link.rate * (s - link.lam))


def energy_cost(link: LinkSpec, p_k: float, gamma: float) -> float:
    """Energy per reliably delivered bit; ``inf`` when nothing gets through."""
    s = link.success.value(float(gamma))
    if s <= 0.0:
        return math.inf
    return (p_k + link.p_c) / (link.rate * s)


def link_cost(link: LinkSpec, p_k: float, gamma: float, strict: bool = True) -> float:
    """Scalarized cost ``rho * delay + energy`` of one link.

    With ``strict=False`` an unstable queue yields ``inf`` instead of raising,
    which is what solvers comparing boundary candidates want.
    """
    s = link.success.value(float(gamma))
    if s <= link.lam:
        if strict:
            raise QueueUnstable(f"S(gamma)={s:.6g} does not exceed lambda={link.lam:.6g}")
        return math.inf
    return (link.rho / (s - link.lam) + (p_k + link.p_c) / s) / link.rate


def dgamma_dp_own(alpha: float, phi: float, omega_k: float, p_k: float) -> float:
    """Derivative of the own SINR with respect to the own power."""
    d = phi * p_k + omega_k
    return alpha * omega_k / (d * d)


def lambda_power(link: LinkSpec, omega_k: float) -> float:
    """Power at which ``S(gamma) = lam``; 0 when ``lam = 0``.

    Returns ``inf`` when the self-interference ceiling ``alpha / phi`` keeps
    ``S`` below ``lam`` for every power.
    """
    return _lambda_power(link.success, link.alpha, link.phi, omega_k)


def _lambda_power(s: SuccessFunction, alpha: float, phi: float, omega_k: float) -> float:
    if s.lam == 0.0:
        return 0.0
    g = s.inverse(s.lam)
    den = alpha - g * phi
    if den <= 0.0:
        return math.inf
    return g * omega_k / den


def _stationarity_residual(s, alpha, phi, rho, p_c, omega_k, p_k):
    # zero of this function is the stationary point of the link cost; its
    # sign equals the sign of d cost / d p
    gamma = p_k * alpha / (phi * p_k + omega_k)
    sv = s.value(gamma)
    ds = s.derivative(gamma)
    dg = dgamma_dp_own(alpha, phi, omega_k, p_k)
    den = ds * dg
    first = sv / den if den > 0.0 else math.inf
    gap = sv - s.lam
    return first - p_k - rho * (sv / gap) ** 2 - p_c


def link_cost_derivative(link: LinkSpec, p_k: float, omega_k: float) -> float:
    """Stationarity residual of the link cost.

    ``g(p) = S / (S' dgamma/dp) - p - rho S^2 / (S - lam)^2 - P_C``, equal to
    ``R S^2 / (S' dgamma/dp)`` times ``d cost / d p``.  It increases strictly
    from ``-inf`` just above the queue-stability power to ``+inf``.
    """
    p_lam = lambda_power(link, omega_k)
    if not p_k > p_lam:
        raise DomainError(f"p_k={p_k!r} must exceed the stability power {p_lam!r}")
    return _stationarity_residual(
        link.success, link.alpha, link.phi, link.rho, link.p_c, omega_k, float(p_k)
    )
