"""Monte-Carlo sweeps over the maximum power, CSV output and plot scripts.

Every (P_max, rho, run) cell draws one scenario; the same channel
realization is shared by all schemes and all P_max values of that run, so
orderings between schemes are paired comparisons.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .central import (
    MbiConfig,
    cost_min,
    cost_sum,
    max_delay,
    mean_delay,
    network_energy,
    run_mbi_min,
    run_mbi_sum,
)
from .exceptions import EnergyDelayError
from .feasibility import check_necessary, find_feasible_start
from .game import BrdConfig, Perturbation, SolveReport, run_brd
from .model import GameSpec, link_cost, sinr_all
from .scenario import ScenarioConfig, generate

__all__ = [
    "SCHEMES",
    "CSV_FIELDS",
    "ExperimentPlan",
    "desk_scenario",
    "run_experiment",
    "cell_spec",
    "row_costs",
    "summarize",
    "emit_csv",
    "load_csv",
    "emit_plot_script",
]

SCHEMES = ("brd-qos", "brd-relaxed", "brd-perturbed", "mbi-sum", "mbi-min")

CSV_FIELDS = (
    "scheme", "theta", "rho", "pmax_dbw", "run", "seed", "status", "relaxed", "iterations",
    "c_sum", "c_min", "energy_cost", "delay_cost", "max_delay", "c_k_min", "c_k_max",
    "mean_power_w", "ref_c_sum", "powers_w",
)


def desk_scenario(**changes) -> ScenarioConfig:
    """Two cells with four users each; everything else at the reference values."""
    return ScenarioConfig(**{"cells": 2, "users_per_cell": 4, **changes})


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: ScenarioConfig = field(default_factory=desk_scenario)
    pmax_sweep_dbw: tuple = (-40.0, -30.0, -20.0, -10.0)
    schemes: tuple = SCHEMES
    theta_levels: tuple = (1.0 - 1e-2, 1.0 - 1e-3)
    rho_levels: tuple = (1.0, 10.0)
    monte_carlo_runs: int = 5
    seed: int = 0
    perturbation_pct: float = 30.0
    brd: BrdConfig = BrdConfig(qos_fallback="relax-to-zero")
    # the sum cost is nearly flat along joint power scalings at high P_max and
    # single-block moves crawl down that valley; a looser stop keeps sweeps short
    mbi: MbiConfig = MbiConfig(epsilon=1e-9, max_iters=500)

    def __post_init__(self):
        object.__setattr__(self, "pmax_sweep_dbw", tuple(float(x) for x in self.pmax_sweep_dbw))
        object.__setattr__(self, "theta_levels", tuple(float(x) for x in self.theta_levels))
        object.__setattr__(self, "rho_levels", tuple(float(x) for x in self.rho_levels))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.pmax_sweep_dbw:
            raise ValueError("the P_max sweep must not be empty")
        if self.monte_carlo_runs < 1:
            raise ValueError("monte_carlo_runs must be at least 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
        if not self.theta_levels or not self.rho_levels:
            raise ValueError("theta_levels and rho_levels must not be empty")
        if not 0 <= self.perturbation_pct < 100:
            raise ValueError("perturbation_pct must lie in [0, 100)")

    def replace(self, **changes) -> "ExperimentPlan":
        return dataclasses.replace(self, **changes)

    def run_seed(self, run: int) -> int:
        return self.seed * 1_000_003 + run


def cell_spec(plan: ExperimentPlan, pmax_dbw: float, rho: float, run: int,
              theta: float | None = None) -> GameSpec:
    """Regenerate the instance behind one CSV row."""
    cfg = plan.scenario.replace(p_max_dbw=pmax_dbw, rho=rho, seed=plan.run_seed(run))
    if theta is not None and math.isfinite(theta):
        cfg = cfg.replace(theta=theta)
    return generate(cfg)


def row_costs(p, spec: GameSpec) -> dict:
    """Every cost reported in a row, recomputed from the powers."""
    p = np.asarray(p, dtype=float)
    gam = sinr_all(p, spec)
    ck = np.array([link_cost(l, p[k], gam[k], strict=False) for k, l in enumerate(spec.links)])
    return {
        "c_sum": cost_sum(p, spec, strict=False),
        "c_min": cost_min(p, spec, strict=False),
        "energy_cost": network_energy(p, spec),
        "delay_cost": mean_delay(p, spec, strict=False),
        "max_delay": max_delay(p, spec, strict=False),
        "c_k_min": float(ck.min()),
        "c_k_max": float(ck.max()),
        "mean_power_w": float(p.mean()),
    }


def _row(scheme, theta, rho, pmax, run, seed, status, relaxed, iterations, p, spec, ref=math.nan):
    row = {
        "scheme": scheme, "theta": theta, "rho": rho, "pmax_dbw": pmax, "run": run,
        "seed": seed, "status": status, "relaxed": bool(relaxed), "iterations": int(iterations),
        "ref_c_sum": ref,
    }
    if p is None:
        row.update({k: math.nan for k in ("c_sum", "c_min", "energy_cost", "delay_cost", "max_delay",
                                          "c_k_min", "c_k_max", "mean_power_w")})
        row["powers_w"] = []
    else:
        row.update(row_costs(p, spec))
        row["powers_w"] = [float(x) for x in p]
    return row


def _brd_status(rep: SolveReport) -> str:
    if rep.termination != "converged":
        return rep.termination
    if not np.all(np.isfinite(rep.per_link_cost)):
        return "unstable"
    return "ok"


def _brd_start(spec: GameSpec):
    # the minimal QoS power vector when the targets are jointly feasible,
    # full power otherwise
    if check_necessary(spec).necessary_ok:
        try:
            return find_feasible_start(spec)
        except EnergyDelayError:
            pass
    return np.array(spec.p_max)


def _run_cell(plan: ExperimentPlan, pmax: float, rho: float, run: int) -> list:
    rows = []
    seed = plan.run_seed(run)
    base = cell_spec(plan, pmax, rho, run)
    K = base.K
    nes = []  # (c_sum, powers) of converged equilibria, for the MBI warm start
    pert = Perturbation.draw(np.random.default_rng([seed, 1]), K, plan.perturbation_pct)

    def guarded(scheme, theta, spec, fn):
        try:
            fn()
        except EnergyDelayError as exc:
            rows.append(_row(scheme, theta, rho, pmax, run, seed,
                             f"error:{type(exc).__name__}", False, 0, None, spec))

    for theta in plan.theta_levels:
        spec = base.replace(theta=theta)
        start = _brd_start(spec)
        ne_cost = math.nan
        if "brd-qos" in plan.schemes or "brd-perturbed" in plan.schemes:
            def qos():
                nonlocal ne_cost
                rep = run_brd(spec, start=start, cfg=plan.brd)
                status = _brd_status(rep)
                if "brd-qos" in plan.schemes:
                    rows.append(_row("brd-qos", theta, rho, pmax, run, seed, status, rep.relaxed,
                                     rep.rounds, rep.powers, spec))
                if rep.converged:
                    ne_cost = cost_sum(rep.powers, spec, strict=False)
                    nes.append((ne_cost, rep.powers))
            guarded("brd-qos", theta, spec, qos)
        if "brd-perturbed" in plan.schemes:
            def perturbed():
                rep = run_brd(spec, start=start, cfg=plan.brd, perturbation=pert)
                rows.append(_row("brd-perturbed", theta, rho, pmax, run, seed, _brd_status(rep),
                                 rep.relaxed, rep.rounds, rep.powers, spec, ref=ne_cost))
            guarded("brd-perturbed", theta, spec, perturbed)

    if "brd-relaxed" in plan.schemes:
        def relaxed():
            cfg = dataclasses.replace(plan.brd, enforce_qos=False)
            rep = run_brd(base, cfg=cfg)
            rows.append(_row("brd-relaxed", math.nan, rho, pmax, run, seed, _brd_status(rep),
                             True, rep.rounds, rep.powers, base))
            if rep.converged:
                nes.append((cost_sum(rep.powers, base, strict=False), rep.powers))
        guarded("brd-relaxed", math.nan, base, relaxed)

    finite = [ne for ne in nes if math.isfinite(ne[0])]
    warm = min(finite, key=lambda ne: ne[0]) if finite else (math.nan, np.array(base.p_max))
    for scheme, solver in (("mbi-sum", run_mbi_sum), ("mbi-min", run_mbi_min)):
        if scheme not in plan.schemes:
            continue

        def central(scheme=scheme, solver=solver):
            rep = solver(base, start=warm[1], cfg=plan.mbi)
            status = "ok" if rep.termination in ("converged", "stationary") else rep.termination
            rows.append(_row(scheme, math.nan, rho, pmax, run, seed, status, False,
                             rep.iterations, rep.powers, base, ref=warm[0]))
        guarded(scheme, math.nan, base, central)
    return rows


def _order_key(row):
    theta = row["theta"] if math.isfinite(row["theta"]) else -1.0
    return (SCHEMES.index(row["scheme"]), theta, row["rho"], row["pmax_dbw"], row["run"])


def run_experiment(plan: ExperimentPlan) -> list:
    """All rows of the sweep, ordered by (scheme, theta, rho, P_max, run)."""
    rows = []
    for run in range(plan.monte_carlo_runs):
        for rho in plan.rho_levels:
            for pmax in plan.pmax_sweep_dbw:
                rows.extend(_run_cell(plan, pmax, rho, run))
    return sorted(rows, key=_order_key)


def summarize(rows, value: str = "iterations", status_ok: tuple | None = None) -> dict:
    """Mean of ``value`` per (scheme, theta, rho, pmax_dbw)."""
    groups: dict = {}
    for r in rows:
        if status_ok is not None and r["status"] not in status_ok:
            continue
        key = (r["scheme"], r["theta"], r["rho"], r["pmax_dbw"])
        groups.setdefault(key, []).append(float(r[value]))
    return {k: float(np.mean(v)) for k, v in groups.items()}


# ----------------------------------------------------------------- files


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(repr(float(x)) for x in v)
    return str(v)


def emit_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in CSV_FIELDS])


_INT_FIELDS = {"run", "seed", "iterations"}
_STR_FIELDS = {"scheme", "status"}


def load_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_FIELDS:
            raise ValueError(f"unexpected CSV header {header!r}")
        out = []
        for rec in reader:
            row = {}
            for k, v in zip(header, rec):
                if k in _STR_FIELDS:
                    row[k] = v
                elif k in _INT_FIELDS:
                    row[k] = int(v)
                elif k == "relaxed":
                    row[k] = v == "1"
                elif k == "powers_w":
                    row[k] = [float(x) for x in v.split()]
                else:
                    row[k] = float(v)
            out.append(row)
    return out


_PLOT_TEMPLATE = '''"""Charts from an energydelay sweep CSV.  Usage: python {name} sweep.csv"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

rows = list(csv.DictReader(open(sys.argv[1] if len(sys.argv) > 1 else {csv!r})))


def curve(scheme, col, theta=None, rho="1.0", status=None):
    acc = defaultdict(list)
    for r in rows:
        if r["scheme"] != scheme or r["rho"] != rho:
            continue
        if theta is not None and r["theta"] != theta:
            continue
        if status is not None and r["status"] not in status:
            continue
        v = float(r[col])
        if v == v and v != float("inf"):
            acc[float(r["pmax_dbw"])].append(v)
    xs = sorted(acc)
    return xs, [sum(acc[x]) / len(acc[x]) for x in xs]


thetas = sorted({{r["theta"] for r in rows if r["scheme"] == "brd-qos"}})
panels = [
    ("c_sum", "sum cost"),
    ("energy_cost", "energy cost"),
    ("delay_cost", "mean delay"),
    ("c_k_max", "max per-user cost"),
    ("mean_power_w", "mean transmit power [W]"),
    ("iterations", "BRD rounds"),
]
fig, axes = plt.subplots(2, 3, figsize=(14, 8))
for ax, (col, label) in zip(axes.flat, panels):
    for th in thetas:
        ax.plot(*curve("brd-qos", col, theta=th), "o-", label=f"BRD theta={{th}}")
        if col == "c_sum":
            ax.plot(*curve("brd-perturbed", col, theta=th), "x--", label=f"perturbed theta={{th}}")
    if col != "iterations":
        ax.plot(*curve("mbi-sum", col), "s-", label="MBI sum")
        ax.plot(*curve("mbi-min", col), "d-", label="MBI max-delay")
    ax.set_xlabel("P_max [dBW]")
    ax.set_ylabel(label)
    ax.set_yscale("log" if col != "iterations" else "linear")
    ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig({png!r})
'''


def emit_plot_script(csv_path, path) -> None:
    """Write a standalone matplotlib script that charts the sweep CSV."""
    path = Path(path)
    text = _PLOT_TEMPLATE.format(name=path.name, csv=str(csv_path),
                                 png=str(path.with_suffix(".png").name))
    path.write_text(text)
