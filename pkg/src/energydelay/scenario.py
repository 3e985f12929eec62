"""Synthetic multicell scenarios, success-model fitting and spec files.

Coefficient model (a surrogate; only the SINR form matters to the solvers):

* ``alpha_k = N g_kk (1 - tau^2)(1 - eps^2)``
* ``phi_k   = g_kk (tau^2 + eps^2) n_eff``
* ``beta_kj = g_{b(k), j}``, the gain from user ``j`` into the base station
  serving user ``k``
* ``sigma2  = F B N0`` in watts

with ``g = 10^(-PL_ref/10) d^(-eta) |h|^2`` and ``|h|^2 ~ Exp(1)``.  Cells
are 500 m squares on a two-column grid with the base station at the centre.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import PlacementFailed, SpecFormatError
from .feasibility import check_sufficient
from .model import GameSpec

__all__ = [
    "ScenarioConfig",
    "Layout",
    "to_linear",
    "place_users",
    "channel_gains",
    "generate",
    "fit_delta",
    "default_fit_grid",
    "random_game",
    "spec_to_dict",
    "spec_from_dict",
    "save_spec",
    "load_spec",
    "load_scenario",
    "scenario_from_dict",
]

SPEC_FORMAT = "energydelay-spec/1"


def to_linear(x, unit: str = "dB"):
    """Convert ``dB`` (ratio), ``dBW`` or ``dBm`` values to linear (W for powers)."""
    x = np.asarray(x, dtype=float)
    if unit == "dB" or unit == "dBW":
        out = 10.0 ** (x / 10.0)
    elif unit == "dBm":
        out = 10.0 ** (x / 10.0) * 1e-3
    else:
        raise ValueError(f"unknown unit {unit!r}")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScenarioConfig:
    # physical layer
    cells: int = 4
    users_per_cell: int = 8
    cell_edge_m: float = 500.0
    min_distance_m: float = 10.0
    antennas_n: int = 64
    pathloss_exp: float = 3.5
    noise_figure_db: float = 3.0
    bandwidth_hz: float = 180e3
    noise_psd_dbm_hz: float = -174.0
    p_c_dbm: float = 10.0
    tau: float = 0.3
    eps_impairment: float = 0.1
    rho: float = 1.0
    rate_bps: float = 1e6
    seed: int = 0
    # knobs without a reference value
    p_max_dbw: float = -10.0
    theta: float = 1.0 - 1e-2
    lam: float = 0.01
    packet_q: int = 100
    pathloss_ref_db: float = 23.1  # loss at 1 m; 128.1 dB at 1 km with exponent 3.5
    n_eff: float = 1.0

    def __post_init__(self):
        positive = ("cells", "users_per_cell", "cell_edge_m", "antennas_n", "pathloss_exp",
                    "bandwidth_hz", "rho", "rate_bps", "packet_q", "n_eff")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not 0 <= self.min_distance_m < self.cell_edge_m / 2:
            raise ValueError("min_distance_m must lie in [0, cell_edge_m / 2)")
        for name in ("tau", "eps_impairment"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        if not 0 <= self.lam < self.theta < 1:
            raise ValueError("need 0 <= lam < theta < 1 (the QoS target assumes theta > lambda)")

    @property
    def K(self) -> int:
        return self.cells * self.users_per_cell

    @property
    def noise_power_w(self) -> float:
        return to_linear(self.noise_psd_dbm_hz + self.noise_figure_db, "dBm") * self.bandwidth_hz

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Layout:
    bs: np.ndarray  # (L, 2) base-station positions
    users: np.ndarray  # (K, 2) user positions
    serving: np.ndarray  # (K,) serving cell of each user


def _cell_origin(c: int, edge: float) -> np.ndarray:
    return np.array([(c % 2) * edge, (c // 2) * edge])


def place_users(cfg: ScenarioConfig, rng: np.random.Generator, max_tries: int = 1000) -> Layout:
    edge = cfg.cell_edge_m
    bs = np.array([_cell_origin(c, edge) + edge / 2 for c in range(cfg.cells)])
    users, serving = [], []
    for c in range(cfg.cells):
        o = _cell_origin(c, edge)
        for _ in range(cfg.users_per_cell):
            for _ in range(max_tries):
                u = o + rng.uniform(0.0, edge, size=2)
                if np.min(np.hypot(*(bs - u).T)) >= cfg.min_distance_m:
                    break
            else:
                raise PlacementFailed(f"no position at >= {cfg.min_distance_m} m after {max_tries} draws")
            users.append(u)
            serving.append(c)
    return Layout(bs, np.array(users), np.array(serving))


def channel_gains(cfg: ScenarioConfig, layout: Layout, rng: np.random.Generator) -> np.ndarray:
    """``G[l, j]``: gain from user ``j`` to base station ``l`` with Rayleigh fading."""
    d = np.hypot(layout.bs[:, None, 0] - layout.users[None, :, 0],
                 layout.bs[:, None, 1] - layout.users[None, :, 1])
    pl = to_linear(-cfg.pathloss_ref_db) * d ** (-cfg.pathloss_exp)
    return pl * rng.exponential(1.0, size=d.shape)


def default_fit_grid() -> np.ndarray:
    return np.linspace(0.01, 30.0, 3000)


@functools.lru_cache(maxsize=64)
def _fit_delta_cached(q: int, grid: tuple) -> float:
    g = np.array(grid)
    ref = (-np.expm1(-g)) ** q

    def mse(log_d):
        return float(np.mean((-np.expm1(-np.exp(log_d) * g) - ref) ** 2))

    res = minimize_scalar(mse, bounds=(math.log(1e-4), math.log(10.0)), method="bounded",
                          options={"xatol": 1e-12})
    return float(math.exp(res.x))


def fit_delta(q: int, gamma_grid=None) -> float:
    """Least-squares ``delta`` so that ``1 - exp(-delta g)`` tracks ``(1 - exp(-g))^q``."""
    if int(q) != q or q < 1:
        raise ValueError("packet length q must be a positive integer")
    grid = default_fit_grid() if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("fit grid must be non-empty and positive")
    return _fit_delta_cached(int(q), tuple(grid.tolist()))


def generate(cfg: ScenarioConfig) -> GameSpec:
    """Draw one scenario; identical configs give identical specs."""
    rng = np.random.default_rng(cfg.seed)
    layout = place_users(cfg, rng)
    G = channel_gains(cfg, layout, rng)
    K = cfg.K
    own = G[layout.serving, np.arange(K)]
    t2, e2 = cfg.tau**2, cfg.eps_impairment**2
    alpha = cfg.antennas_n * own * (1 - t2) * (1 - e2)
    phi = own * (t2 + e2) * cfg.n_eff
    beta = G[layout.serving, :].copy()
    np.fill_diagonal(beta, 0.0)
    return GameSpec.from_arrays(
        alpha=alpha, phi=phi, beta=beta, sigma2=cfg.noise_power_w,
        delta=fit_delta(cfg.packet_q), lam=cfg.lam, rate=cfg.rate_bps,
        p_max=to_linear(cfg.p_max_dbw, "dBW"), p_c=to_linear(cfg.p_c_dbm, "dBm"),
        theta=cfg.theta, rho=cfg.rho,
    )


def random_game(rng: np.random.Generator, K: int = 8, require_sufficient: bool = True,
                common_rho: bool = True, max_tries: int = 10_000) -> GameSpec:
    """Dimensionless random instance for property tests.

    With ``require_sufficient`` draws are rejected until every best response
    is guaranteed feasible.
    """
    for _ in range(max_tries):
        lam = rng.uniform(0.0, 0.3, K)
        theta = lam + rng.uniform(0.05, 0.6, K)
        rho = rng.uniform(0.1, 2.0) if common_rho else rng.uniform(0.1, 2.0, K)
        spec = GameSpec.from_arrays(
            alpha=rng.uniform(5.0, 10.0, K), phi=rng.uniform(0.0, 0.5, K),
            beta=rng.uniform(0.0, 0.1, (K, K)), sigma2=rng.uniform(0.05, 0.2, K),
            delta=1.0, lam=lam, rate=1.0, p_max=rng.uniform(0.5, 2.0, K),
            p_c=rng.uniform(0.0, 1.0, K), theta=theta, rho=rho,
        )
        if not require_sufficient or check_sufficient(spec).ok:
            return spec
    raise RuntimeError("no instance passed the sufficient feasibility check")


# ------------------------------------------------------------ spec files

_LINK_FIELDS = {
    # file name -> GameSpec array name
    "alpha": "alpha",
    "phi": "phi",
    "sigma2_w": "sigma2",
    "delta": "delta",
    "lam_per_slot": "lam",
    "rate_bps": "rate",
    "p_max_w": "p_max",
    "p_c_w": "p_c",
    "theta": "theta",
    "rho_j_per_s": "rho",
}


def spec_to_dict(spec: GameSpec, scenario: ScenarioConfig | None = None) -> dict:
    arrays = spec.to_arrays()
    links = []
    for k in range(spec.K):
        entry = {name: float(arrays[src][k]) for name, src in _LINK_FIELDS.items()}
        entry["beta_row"] = [float(v) for v in arrays["beta"][k]]
        links.append(entry)
    out = {"format": SPEC_FORMAT, "links": links}
    if scenario is not None:
        out["scenario"] = dataclasses.asdict(scenario)
    return out


def _line_of(text: str | None, key: str, occurrence: int) -> int | None:
    if text is None:
        return None
    hits = [m.start() for m in re.finditer(rf'"{re.escape(key)}"\s*:', text)]
    if occurrence < len(hits):
        return text.count("\n", 0, hits[occurrence]) + 1
    return None


def spec_from_dict(data: dict, text: str | None = None) -> GameSpec:
    if not isinstance(data, dict):
        raise SpecFormatError("top level must be an object")
    if data.get("format") != SPEC_FORMAT:
        raise SpecFormatError(f"expected format {SPEC_FORMAT!r}, got {data.get('format')!r}",
                              field="format", line=_line_of(text, "format", 0))
    links = data.get("links")
    if not isinstance(links, list) or not links:
        raise SpecFormatError("'links' must be a non-empty list", field="links",
                              line=_line_of(text, "links", 0))
    K = len(links)
    cols = {src: np.empty(K) for src in _LINK_FIELDS.values()}
    beta = np.empty((K, K))
    for k, entry in enumerate(links):
        if not isinstance(entry, dict):
            raise SpecFormatError("link entry must be an object", field=f"links[{k}]")
        for name, src in list(_LINK_FIELDS.items()) + [("beta_row", None)]:
            path = f"links[{k}].{name}"
            if name not in entry:
                raise SpecFormatError("missing field", field=path)
            value = entry[name]
            line = _line_of(text, name, k)
            try:
                if src is None:
                    row = np.asarray(value, dtype=float)
                    if row.shape != (K,):
                        raise ValueError(f"expected {K} entries")
                    beta[k] = row
                else:
                    if isinstance(value, bool) or not isinstance(value, (int, float)):
                        raise ValueError("expected a number")
                    cols[src][k] = float(value)
            except (TypeError, ValueError) as exc:
                raise SpecFormatError(f"bad value {value!r}: {exc}", field=path, line=line) from None
        if not cols["theta"][k] > cols["lam"][k]:
            raise SpecFormatError(
                f"theta ({cols['theta'][k]!r}) must exceed lambda ({cols['lam'][k]!r}); "
                "the QoS target assumes theta > lambda",
                field=f"links[{k}].theta", line=_line_of(text, "theta", k))
    try:
        return GameSpec.from_arrays(beta=beta, **cols)
    except ValueError as exc:
        raise SpecFormatError(f"invalid link parameters: {exc}", field="links") from None


def save_spec(spec: GameSpec, path, scenario: ScenarioConfig | None = None) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec, scenario), indent=2) + "\n")


def _read_json(path):
    text = Path(path).read_text()
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"malformed JSON: {exc.msg}", line=exc.lineno) from None


def load_spec(path) -> GameSpec:
    data, text = _read_json(path)
    return spec_from_dict(data, text)


def scenario_from_dict(data: dict, text: str | None = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise SpecFormatError("scenario must be an object", field="scenario")
    known = {f.name: f for f in fields(ScenarioConfig)}
    for key in data:
        if key not in known:
            raise SpecFormatError("unknown field", field=key, line=_line_of(text, key, 0))
    kw = {}
    for key, value in data.items():
        default = known[key].default
        try:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError("expected a number")
            kw[key] = int(value) if isinstance(default, int) else float(value)
        except ValueError as exc:
            raise SpecFormatError(f"bad value {value!r}: {exc}", field=key,
                                  line=_line_of(text, key, 0)) from None
    try:
        return ScenarioConfig(**kw)
    except ValueError as exc:
        raise SpecFormatError(str(exc), field="scenario") from None


def load_scenario(path) -> ScenarioConfig:
    """Read a scenario config; either a bare object or the ``scenario`` key of a spec file."""
    data, text = _read_json(path)
    if isinstance(data, dict) and "scenario" in data:
        data = data["scenario"]
    return scenario_from_dict(data, text)
