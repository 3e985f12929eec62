"""Command line front end.

Exit codes: 0 success, 1 infeasible instance, 2 solver failure, 3 bad input.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import selftest as _selftest
from .central import MbiConfig, cost_sum, energy_efficient_power, run_mbi_min, run_mbi_sum
from .exceptions import EnergyDelayError, Infeasible, SpecFormatError
from .experiment import ExperimentPlan, desk_scenario, emit_csv, emit_plot_script, run_experiment, summarize
from .feasibility import check_necessary, check_sufficient, find_feasible_start
from .game import BrdConfig, run_brd
from .model import omega
from .scenario import ScenarioConfig, generate, load_spec, save_spec, scenario_from_dict

log = logging.getLogger("energydelay")

EXIT_OK, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_INPUT = 0, 1, 2, 3


class BadInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="scenario / run seed")
    p.add_argument("--config", type=Path, default=d(None),
                   help="JSON file with scenario fields (optionally under 'scenario') and plan fields")
    p.add_argument("--out", type=Path, default=d(None), help="output file")
    p.add_argument("--tolerance", type=float, default=d(None), help="solver stopping tolerance")
    p.add_argument("--max-iters", type=int, default=d(None), help="iteration cap")
    p.add_argument("--quiet", action="store_true", default=d(False), help="only print errors")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="energydelay", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def cmd(name, help_text, spec_arg=True):
        p = sub.add_parser(name, help=help_text)
        _add_globals(p, suppress=True)
        if spec_arg:
            p.add_argument("spec", nargs="?", type=Path,
                           help="spec file; default draws a desk-scale scenario")
            p.add_argument("--pmax-dbw", type=float, help="P_max for a drawn scenario")
            p.add_argument("--theta", type=float, help="QoS target for a drawn scenario")
        return p

    cmd("generate", "draw a scenario and write it as a spec file")
    cmd("feasibility", "feasibility report for the QoS targets")
    p = cmd("brd", "distributed best-response dynamics")
    p.add_argument("--schedule", choices=("synchronous", "sequential", "randomized"),
                   default="synchronous")
    p.add_argument("--no-qos", action="store_true", help="drop the QoS constraints")
    p.add_argument("--relax", action="store_true", help="drop QoS on the first infeasible best response")
    for name, text in (("mbi-sum", "centralized minimization of the sum cost"),
                       ("mbi-min", "centralized minimization of the max-delay cost")):
        p = cmd(name, text)
        p.add_argument("--start", choices=("pmax", "ne"), default="pmax",
                       help="full power or the best-response equilibrium")
    p = cmd("dinkelbach-demo", "energy-efficient power of one link by Dinkelbach's method")
    p.add_argument("--link", type=int, default=0)
    p = cmd("sweep", "Monte-Carlo sweep over P_max", spec_arg=False)
    p.add_argument("--runs", type=int, help="Monte-Carlo runs per P_max")
    p.add_argument("--plot-script", type=Path, help="also write a matplotlib script")
    cmd("selftest", "run the built-in invariant checks", spec_arg=False)
    return parser


# ------------------------------------------------------------------ inputs


def _read_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise BadInput(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise BadInput(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise BadInput(f"{path}: top level must be an object")
    return data


def _scenario(args) -> ScenarioConfig:
    data = args.config_data
    raw = data.get("scenario", {k: v for k, v in data.items() if k in _SCENARIO_FIELDS})
    base = dataclasses.asdict(desk_scenario())
    base.update(raw)
    for key, attr in (("seed", "seed"), ("p_max_dbw", "pmax_dbw"), ("theta", "theta")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    return scenario_from_dict(base)


_SCENARIO_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def _spec(args):
    if getattr(args, "spec", None) is not None:
        try:
            return load_spec(args.spec)
        except FileNotFoundError:
            raise BadInput(f"spec file not found: {args.spec}") from None
    return generate(_scenario(args))


def _plan(args) -> ExperimentPlan:
    data = args.config_data
    kw = {}
    for key in ("pmax_sweep_dbw", "schemes", "theta_levels", "rho_levels", "monte_carlo_runs",
                "perturbation_pct"):
        if key in data:
            kw[key] = data[key]
    if args.runs is not None:
        kw["monte_carlo_runs"] = args.runs
    if args.seed is not None:
        kw["seed"] = args.seed
    mbi = ExperimentPlan().mbi
    brd = ExperimentPlan().brd
    if args.tolerance is not None:
        mbi = dataclasses.replace(mbi, epsilon=args.tolerance)
        brd = dataclasses.replace(brd, epsilon=args.tolerance)
    if args.max_iters is not None:
        mbi = dataclasses.replace(mbi, max_iters=args.max_iters)
        brd = dataclasses.replace(brd, max_rounds=args.max_iters)
    try:
        return ExperimentPlan(scenario=_scenario(args), mbi=mbi, brd=brd, **kw)
    except (TypeError, ValueError) as exc:
        raise BadInput(f"invalid plan: {exc}") from None


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _fmt_vec(v) -> str:
    return "[" + ", ".join(f"{x:.6g}" for x in np.asarray(v)) + "]"


# ----------------------------------------------------------------- commands


def _cmd_generate(args) -> int:
    cfg = _scenario(args)
    spec = generate(cfg)
    out = args.out or Path("scenario.json")
    save_spec(spec, out, scenario=cfg)
    _say(args, f"wrote {spec.K}-link spec to {out}")
    return EXIT_OK


def _cmd_feasibility(args) -> int:
    spec = _spec(args)
    suff = check_sufficient(spec)
    rep = check_necessary(spec)
    _say(args, f"links: {spec.K}")
    _say(args, f"sufficient condition (every best response feasible): {suff.ok}")
    _say(args, f"spectral radius rho_F: {rep.rho_F:.6g}")
    _say(args, f"jointly feasible: {rep.necessary_ok}")
    if rep.min_power_vector is not None:
        _say(args, f"minimal power vector [W]: {_fmt_vec(rep.min_power_vector)}")
    if not rep.necessary_ok:
        print(f"infeasible: {rep.cause}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _brd_cfg(args, **extra) -> BrdConfig:
    kw = dict(extra)
    if args.tolerance is not None:
        kw["epsilon"] = args.tolerance
    if args.max_iters is not None:
        kw["max_rounds"] = args.max_iters
    return BrdConfig(**kw)


def _cmd_brd(args) -> int:
    spec = _spec(args)
    cfg = _brd_cfg(args, schedule=args.schedule, enforce_qos=not args.no_qos,
                   qos_fallback="relax-to-zero" if args.relax else "enforce")
    start = None
    if cfg.enforce_qos and not args.relax:
        start = find_feasible_start(spec)
    rep = run_brd(spec, start=start, cfg=cfg)
    for n, m in enumerate(rep.metric_trace, 1):
        _say(args, f"round {n:4d}  |dp|^2/|p|^2 = {m:.3e}")
    _say(args, f"termination: {rep.termination} after {rep.rounds} rounds"
               + (" (QoS relaxed)" if rep.relaxed else ""))
    _say(args, f"powers [W]: {_fmt_vec(rep.powers)}")
    _say(args, f"sum cost: {cost_sum(rep.powers, spec, strict=False):.6g}")
    for w in rep.warnings:
        log.warning(w)
    _write_powers(args, rep.powers)
    if rep.termination == "infeasible":
        return EXIT_INFEASIBLE
    return EXIT_OK if rep.converged else EXIT_SOLVER


def _mbi_cfg(args) -> MbiConfig:
    kw = {}
    if args.tolerance is not None:
        kw["epsilon"] = args.tolerance
    if args.max_iters is not None:
        kw["max_iters"] = args.max_iters
    return MbiConfig(**kw)


def _cmd_mbi(args, solver) -> int:
    spec = _spec(args)
    start = None
    if args.start == "ne":
        ne = run_brd(spec, cfg=BrdConfig(qos_fallback="relax-to-zero"))
        if not ne.converged:
            print("best-response dynamics did not converge", file=sys.stderr)
            return EXIT_SOLVER
        start = ne.powers
    rep = solver(spec, start=start, cfg=_mbi_cfg(args))
    _say(args, f"termination: {rep.termination} after {rep.iterations} iterations")
    _say(args, f"objective: {rep.objective_trace[0]:.6g} -> {rep.objective:.6g}")
    _say(args, f"sum cost: {rep.cost_sum:.6g}  max-delay cost: {rep.cost_min:.6g}")
    _say(args, f"KKT residual: {rep.kkt_residual:.3e}")
    _say(args, f"powers [W]: {_fmt_vec(rep.powers)}")
    _write_powers(args, rep.powers)
    return EXIT_OK if rep.termination in ("converged", "stationary") else EXIT_SOLVER


def _cmd_dinkelbach(args) -> int:
    spec = _spec(args)
    if not 0 <= args.link < spec.K:
        raise BadInput(f"--link must lie in [0, {spec.K})")
    p = np.array(spec.p_max)
    w = omega(args.link, p, spec)
    res = energy_efficient_power(spec.link(args.link), w)
    for n, (lam, F) in enumerate(zip(res.lambdas[1:], res.F_values), 1):
        _say(args, f"iter {n:2d}  lambda = {lam:.12g}  F = {F:.3e}")
    _say(args, f"power [W]: {res.x:.6g}  energy cost: {res.ratio:.6g} J/bit")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    plan = _plan(args)
    t0 = time.perf_counter()
    rows = run_experiment(plan)
    out = args.out or Path("sweep.csv")
    emit_csv(rows, out)
    if args.plot_script is not None:
        emit_plot_script(out, args.plot_script)
    _say(args, f"{len(rows)} rows in {time.perf_counter() - t0:.1f} s -> {out}")
    for (scheme, theta, rho, pmax), v in sorted(summarize(rows).items(), key=lambda kv: str(kv[0])):
        _say(args, f"{scheme:14s} theta={theta:<7.4g} rho={rho:<4g} pmax={pmax:6.1f} dBW  "
                   f"mean iterations {v:8.2f}")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    failures = _selftest.run(verbose=not args.quiet)
    return EXIT_OK if not failures else EXIT_SOLVER


def _write_powers(args, p) -> None:
    if args.out is not None:
        args.out.write_text(json.dumps({"powers_w": [float(x) for x in p]}, indent=2) + "\n")


COMMANDS = {
    "generate": _cmd_generate,
    "feasibility": _cmd_feasibility,
    "brd": _cmd_brd,
    "mbi-sum": lambda a: _cmd_mbi(a, run_mbi_sum),
    "mbi-min": lambda a: _cmd_mbi(a, run_mbi_min),
    "dinkelbach-demo": _cmd_dinkelbach,
    "sweep": _cmd_sweep,
    "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        args.config_data = _read_config(args.config)  # read once so pipes work
        return COMMANDS[args.command](args)
    except (BadInput, SpecFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except EnergyDelayError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
