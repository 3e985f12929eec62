"""Acceptance criteria 1 to 11.

Each test records one PASS/FAIL line (shown in the terminal summary) and
asserts the criterion at its stated tolerance.
"""

import math
import time

import numpy as np
import pytest

from energydelay.central import (
    MbiConfig,
    cost_sum,
    dinkelbach,
    min_residual,
    network_energy,
    run_mbi_min,
    run_mbi_sum,
    sinr_gradient,
    success_gradient,
    sum_residual,
)
from energydelay.experiment import ExperimentPlan, desk_scenario, run_experiment, summarize
from energydelay.feasibility import (
    check_br_feasible,
    check_necessary,
    check_sufficient,
    random_feasible_start,
)
from energydelay.game import (
    BrdConfig,
    LocalView,
    Perturbation,
    _unclamped,
    best_response,
    check_uniqueness_condition,
    run_brd,
    uniqueness_grid,
)
from energydelay.model import SuccessModel, link_cost, link_cost_derivative, omega, sinr_all
from energydelay.numerics import spectral_radius
from energydelay.scenario import random_game

from conftest import ACCEPTANCE


def record(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)


def with_k(p, k, v):
    q = np.array(p, dtype=float)
    q[k] = v
    return q


@pytest.fixture(scope="module")
def lemma_instances():
    """100 seeded K=8 instances passing the sufficient condition and the uniqueness check."""
    rng = np.random.default_rng(20240101)
    out = []
    while len(out) < 100:
        spec = random_game(rng, K=8)
        if all(check_uniqueness_condition(l.success)[0] for l in spec.links):
            out.append(spec)
    return out


@pytest.fixture(scope="module")
def brd_runs(lemma_instances):
    """Five random feasible starts per instance, run both to the reference
    tolerance and to machine precision."""
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    runs = []
    for spec in lemma_instances:
        per = []
        for _ in range(5):
            start = random_feasible_start(spec, rng)
            coarse = run_brd(spec, start, BrdConfig(epsilon=1e-4, max_rounds=500))
            fine = run_brd(spec, start, BrdConfig(epsilon=1e-16, max_rounds=500))
            per.append((coarse, fine))
        runs.append(per)
    return runs, time.perf_counter() - t0


def test_criterion_01_uniqueness_and_convergence(brd_runs):
    runs, elapsed = brd_runs
    converged = all(c.converged and c.rounds <= 500 and c.metric_trace[-1] <= 1e-4
                    for per in runs for c, _ in per)
    spread = 0.0
    for per in runs:
        ref = per[0][1].powers
        for _, f in per[1:]:
            spread = max(spread, np.linalg.norm(f.powers - ref) / np.linalg.norm(ref))
    max_rounds = max(c.rounds for per in runs for c, _ in per)
    ok = converged and spread <= 1e-5 and elapsed < 60
    record(1, ok, f"500/500 starts converge: {converged} (max {max_rounds} rounds), "
                  f"fixed-point spread {spread:.2e} <= 1e-5, {elapsed:.1f} s < 60 s")
    assert ok


def test_criterion_02_schedule_independence(lemma_instances, brd_runs):
    runs, _ = brd_runs
    worst = 0.0
    for spec, per in zip(lemma_instances, runs):
        ref = per[0][1].powers
        for schedule in ("sequential", "randomized"):
            rep = run_brd(spec, cfg=BrdConfig(epsilon=1e-16, schedule=schedule, seed=7))
            assert rep.converged
            worst = max(worst, np.linalg.norm(rep.powers - ref) / np.linalg.norm(ref))
    ok = worst <= 1e-5
    record(2, ok, f"max relative distance between schedules {worst:.2e} <= 1e-5")
    assert ok


def test_criterion_03_best_response_oracle():
    rng = np.random.default_rng(3)
    worst_excess, worst_res, interior = -math.inf, 0.0, 0
    n = 100_000
    for _ in range(100):
        spec = random_game(rng, K=8)
        k = int(rng.integers(8))
        p = rng.uniform(0.0, 1.0, 8) * spec.p_max
        feas = check_br_feasible(k, p, spec)
        br = best_response(k, p, spec)
        l = spec.link(k)
        w = omega(k, p, spec)
        xs = np.linspace(feas.p_min, l.p_max, n)
        s = l.success.value(l.alpha * xs / (l.phi * xs + w))
        c = (l.rho / (s - l.lam) + (xs + l.p_c) / s) / l.rate
        c_br = link_cost(l, br, sinr_all(with_k(p, k, br), spec)[k])
        # slack: cost change over one grid step at the returned point
        h = xs[1] - xs[0]
        slope = abs(np.gradient(c, h)).max()
        worst_excess = max(worst_excess, (c_br - c.min()) / (slope * h + 1e-15))
        if feas.p_min < br < l.p_max:
            interior += 1
            r = link_cost_derivative(l, br, w)
            worst_res = max(worst_res, abs(r) / (1 + l.p_c))
    ok = worst_excess <= 1.0 and worst_res <= 1e-8
    record(3, ok, f"best response never above grid minimum + slack (worst {worst_excess:.2f} "
                  f"slack units), residual {worst_res:.1e} <= 1e-8 on {interior} interior optima")
    assert ok


def test_criterion_04_feasibility_logic():
    rng = np.random.default_rng(4)
    counter, hits, worst = 0, 0, 0.0
    for _ in range(1000):
        spec = random_game(rng, K=8, require_sufficient=False)
        suff = check_sufficient(spec).ok
        rep = check_necessary(spec)
        counter += suff and not rep.necessary_ok
        if rep.necessary_ok:
            hits += 1
            s = spec.links[0].success.value(sinr_all(rep.min_power_vector, spec))
            worst = max(worst, float(np.max(np.abs(s - spec.theta))))
    eig_err = 0.0
    for _ in range(50):
        m = rng.uniform(0, 1, (8, 8))
        eig_err = max(eig_err, abs(spectral_radius(m) - max(abs(np.linalg.eigvals(m))))
                      / max(abs(np.linalg.eigvals(m))))
    ok = counter == 0 and hits > 0 and worst <= 1e-8 and eig_err <= 1e-7
    record(4, ok, f"{counter} counterexamples in 1000; S(gamma) - theta {worst:.1e} on {hits} "
                  f"feasible instances; spectral radius error {eig_err:.1e} <= 1e-7")
    assert ok


def test_criterion_05_mbi_descent_and_kkt():
    rng = np.random.default_rng(5)
    mono_sum = mono_min = True
    kkt, cons, t_updates = 0.0, 0.0, 0
    for _ in range(50):
        spec = random_game(rng, K=8)
        rep = run_mbi_sum(spec)
        mono_sum &= bool(np.all(np.diff(rep.objective_trace) <= 0))
        kkt = max(kkt, rep.kkt_residual)
        ne = run_brd(spec, cfg=BrdConfig(epsilon=1e-12)).powers
        for start in (None, ne):
            mrep = run_mbi_min(spec, start=start)
            mono_min &= bool(np.all(np.diff(mrep.objective_trace) <= 0))
            cons = max(cons, max(abs(c) for c in mrep.consistency))
            t_updates += mrep.chosen_blocks.count(spec.K)
    ok = mono_sum and mono_min and kkt <= 1e-4 and cons <= 1e-10 and t_updates > 0
    record(5, ok, f"sum trace monotone {mono_sum}, KKT residual {kkt:.1e} <= 1e-4; max-delay trace "
                  f"monotone {mono_min}, |t-block objective - max-delay cost| {cons:.1e} <= 1e-10 over {t_updates} t updates")
    assert ok


def test_criterion_06_centralized_beats_equilibrium():
    rng = np.random.default_rng(6)
    wins, total, worst = 0, 0, -math.inf
    for _ in range(100):
        spec = random_game(rng, K=8)
        ne = run_brd(spec, cfg=BrdConfig(epsilon=1e-12)).powers
        rep = run_mbi_sum(spec, start=ne, cfg=MbiConfig(epsilon=1e-9, max_iters=500))
        c_ne = cost_sum(ne, spec)
        total += 1
        wins += rep.cost_sum <= c_ne
        worst = max(worst, (rep.cost_sum - c_ne) / c_ne)
    # the same property on scenario instances, taken from a short sweep
    plan = ExperimentPlan(schemes=("brd-qos", "brd-relaxed", "mbi-sum"), rho_levels=(1.0,),
                          pmax_sweep_dbw=(-40.0, -30.0), monte_carlo_runs=4)
    rows = [r for r in run_experiment(plan) if r["scheme"] == "mbi-sum" and math.isfinite(r["ref_c_sum"])]
    s_wins = sum(r["c_sum"] <= r["ref_c_sum"] for r in rows)
    ok = wins == total and s_wins == len(rows) and rows
    record(6, bool(ok), f"MBI from the equilibrium never worse: {wins}/{total} random games, "
                        f"{s_wins}/{len(rows)} scenario runs (largest relative change {worst:.1e})")
    assert ok


@pytest.fixture(scope="module")
def desk_sweep():
    plan = ExperimentPlan(schemes=("brd-qos", "brd-perturbed"), rho_levels=(1.0,), monte_carlo_runs=50)
    t0 = time.perf_counter()
    rows = run_experiment(plan)
    return plan, rows, time.perf_counter() - t0


def test_criterion_07_iteration_trends(desk_sweep):
    plan, rows, elapsed = desk_sweep
    qos = [r for r in rows if r["scheme"] == "brd-qos"]
    means = summarize(qos, "iterations")
    lo_t, hi_t = plan.theta_levels
    trend = {t: [means[("brd-qos", t, 1.0, p)] for p in plan.pmax_sweep_dbw] for t in plan.theta_levels}
    nondecreasing = all(np.all(np.diff(v) >= 0) for v in trend.values())
    at_top = (means[("brd-qos", hi_t, 1.0, -10.0)], means[("brd-qos", lo_t, 1.0, -10.0)])
    relaxed = np.mean([r["relaxed"] for r in qos])
    ok = nondecreasing and at_top[0] >= at_top[1] and elapsed < 300
    record(7, ok, f"mean rounds over {plan.monte_carlo_runs} runs vs P_max {trend[lo_t]} (theta={lo_t}), "
                  f"{trend[hi_t]} (theta={hi_t}); at -10 dBW {at_top[0]:.2f} >= {at_top[1]:.2f}; "
                  f"{elapsed:.0f} s")
    if relaxed == 1.0:
        ACCEPTANCE.append("              note: QoS targets were infeasible in every run of the 2x4 layout, so "
                          "both theta rows are the same relaxed runs and the theta ordering holds with equality")
    assert ok


def test_criterion_07_info_four_cells():
    """Informational: on a 4x2 layout QoS is often feasible at high power."""
    plan = ExperimentPlan(scenario=desk_scenario(cells=4, users_per_cell=2), schemes=("brd-qos",),
                          rho_levels=(1.0,), pmax_sweep_dbw=(-10.0,), monte_carlo_runs=50)
    rows = run_experiment(plan)
    by = {}
    for r in rows:
        by.setdefault(r["run"], {})[r["theta"]] = r["iterations"]
    d = np.array([v[plan.theta_levels[1]] - v[plan.theta_levels[0]] for v in by.values()])
    relaxed = np.mean([r["relaxed"] for r in rows])
    ACCEPTANCE.append(f"      info 7: 4x2 layout at -10 dBW, stricter minus looser theta = {d.mean():+.2f} "
                      f"+/- {d.std(ddof=1) / np.sqrt(d.size):.2f} rounds (paired, 50 runs, "
                      f"{relaxed:.0%} relaxed)")


def test_criterion_08_uniqueness_condition():
    worst = -math.inf
    for delta in (0.1, 1.0, 10.0):
        _, w = check_uniqueness_condition(SuccessModel(delta), uniqueness_grid(10_000))
        worst = max(worst, w)
    rng = np.random.default_rng(8)
    monotone = 0
    for _ in range(50):
        spec = random_game(rng, K=8)
        k = int(rng.integers(8))
        view = LocalView.of(spec.link(k))
        ws = spec.sigma2[k] * np.logspace(-2, 2, 80)
        xs = np.array([_unclamped(view, w) for w in ws])
        monotone += bool(np.all(np.diff(xs) >= 0))
    ok = worst <= 1e-12 and monotone == 50
    record(8, ok, f"max of the condition {worst:.1e} <= 1e-12; best response monotone in omega "
                  f"on {monotone}/50 instances")
    assert ok


def ratio_problems(n=100, seed=9):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        a, c, d = rng.uniform(0.1, 5), rng.uniform(-2, 4), rng.uniform(0.1, 3)
        e, h = rng.uniform(0.1, 3), rng.uniform(0.1, 3)
        lo, hi = sorted(rng.uniform(0, 5, 2))
        hi += 0.1

        def f(x, a=a, c=c, d=d):
            return a * (x - c) ** 2 + d

        def g(x, e=e, h=h):
            return e * x + h

        def argmin(lam, a=a, c=c, e=e, lo=lo, hi=hi):
            return float(np.clip(c + lam * e / (2 * a), lo, hi))

        yield f, g, argmin, lo, hi


def test_criterion_09_dinkelbach():
    worst_gap, max_it = 0.0, 0
    for f, g, m, lo, hi in ratio_problems():
        res = dinkelbach(f, g, m, tol=1e-10)
        xs = np.linspace(lo, hi, 1_000_001)
        r = f(xs) / g(xs)
        slack = np.abs(np.diff(r)).max()
        worst_gap = max(worst_gap, (res.ratio - r.min()) / slack)
        max_it = max(max_it, res.iterations)
        # the ratio sequence of a minimization falls monotonically after the first update
        lam = np.asarray(res.lambdas[1:])
        assert np.all(np.diff(lam) <= 1e-12 * np.abs(lam[1:]))
    ok = worst_gap <= 1.0 and max_it <= 20
    record(9, ok, f"ratio within grid slack (worst {worst_gap:.2f} slack units), at most {max_it} "
                  f"iterations <= 20; lambda non-increasing after the first update")
    assert ok


@pytest.mark.xfail(strict=True, reason="for a ratio minimization the lambda sequence decreases")
def test_criterion_09_literal_lambda_nondecreasing():
    seqs = [dinkelbach(f, g, m, tol=1e-10).lambdas for f, g, m, _, _ in ratio_problems()]
    rising = [bool(np.all(np.diff(s[1:]) >= -1e-12 * np.abs(np.asarray(s[2:])))) for s in seqs]
    ok = all(rising)
    n_bad = rising.count(False)
    record("9b", ok, f"literal check 'lambda non-decreasing after iteration 1' fails on {n_bad}/100 "
                     "problems (minimizing f/g drives lambda down to the optimum ratio)")
    assert ok


def test_criterion_10_gradients():
    rng = np.random.default_rng(10)
    worst = {}

    def upd(name, a, b):
        err = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
        worst[name] = max(worst.get(name, 0.0), err)

    for _ in range(50):
        s = SuccessModel(rng.uniform(0.1, 3))
        gam = rng.uniform(0.05, 3)
        h = 1e-5 * gam
        upd("S'", s.derivative(gam), (s.value(gam + h) - s.value(gam - h)) / (2 * h))
        upd("S''", s.second_derivative(gam), (s.derivative(gam + h) - s.derivative(gam - h)) / (2 * h))
        spec = random_game(rng, K=8, require_sufficient=False).replace(beta=rng.uniform(0.5, 2, (8, 8)))
        p = rng.uniform(0.2, 1.0, 8) * spec.p_max
        k = int(rng.integers(8))
        h = 1e-6 * p[k]
        fd = (sinr_all(with_k(p, k, p[k] + h), spec) - sinr_all(with_k(p, k, p[k] - h), spec)) / (2 * h)
        an = sinr_gradient(k, p, spec)
        mask = np.arange(8) != k
        upd("dgamma_k/dp_k", an[k], fd[k])
        upd("dgamma_l/dp_k", an[mask], fd[mask])
        sv = spec.links[0].success  # delta = 1 on every random-game link
        fd_s = (sv.value(sinr_all(with_k(p, k, p[k] + h), spec))
                - sv.value(sinr_all(with_k(p, k, p[k] - h), spec))) / (2 * h)
        upd("dS_l/dp_k", success_gradient(k, p, spec), fd_s)
        if math.isfinite(cost_sum(p, spec, strict=False)):
            fd_c = (cost_sum(with_k(p, k, p[k] + h), spec) - cost_sum(with_k(p, k, p[k] - h), spec)) / (2 * h)
            upd("sum-cost residual", sum_residual(k, p, spec), spec.rate[0] * fd_c)
        fd_e = (network_energy(with_k(p, k, p[k] + h), spec)
                - network_energy(with_k(p, k, p[k] - h), spec)) / (2 * h)
        upd("energy residual", min_residual(k, p, spec), spec.rate[0] * fd_e)
    bad = {k: v for k, v in worst.items() if v > 1e-5}
    ok = not bad
    record(10, ok, "worst relative FD mismatch " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_11_robustness(desk_sweep):
    rng = np.random.default_rng(11)
    conv = 0
    for _ in range(200):
        spec = random_game(rng, K=8)
        pert = Perturbation.draw(rng, 8, 30.0)
        rep = run_brd(spec, cfg=BrdConfig(qos_fallback="relax-to-zero"), perturbation=pert)
        conv += rep.converged
    plan, rows, _ = desk_sweep
    gaps = {p: [] for p in plan.pmax_sweep_dbw}
    theta = plan.theta_levels[0]
    for r in rows:
        if (r["scheme"] == "brd-perturbed" and r["theta"] == theta and r["status"] == "ok"
                and math.isfinite(r["ref_c_sum"])):
            gaps[r["pmax_dbw"]].append(abs(r["c_sum"] - r["ref_c_sum"]) / r["ref_c_sum"])
    mean_gap = [float(np.mean(gaps[p])) for p in plan.pmax_sweep_dbw]
    shrinking = bool(np.all(np.diff(mean_gap) >= 0))
    pert_ok = np.mean([r["status"] == "ok" for r in rows if r["scheme"] == "brd-perturbed"])
    ok = conv >= 0.95 * 200 and shrinking
    record(11, ok, f"perturbed BRD converges on {conv}/200 sufficient-condition instances; mean relative "
                   f"cost gap vs P_max {plan.pmax_sweep_dbw}: "
                   + ", ".join(f"{g:.3f}" for g in mean_gap)
                   + f" (shrinks as P_max falls: {shrinking}); {pert_ok:.0%} of perturbed sweep runs converge")
    assert ok
