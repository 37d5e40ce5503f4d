"""``crowdctl`` command line: min-time, plan, simulate, check.

Exit codes: 0 success, 1 usage or I/O error, 2 infeasible scenario,
3 synthesis failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .artifacts import (PlanFile, atomic_write, load_plan, save_plan, simulation_summary,
                        trajectory_csv, verification_dict)
from .control import simulate, verify_caratheodory
from .exceptions import (HorizonTooShort, InfeasibleAssignment, InfeasibleScenario,
                         IntegrationDiverged, PerturbationFailed, RadiiDegenerate,
                         ScenarioError, SizeMismatch, TooLargeN, WaypointNotFound)
from .mintime import (APPROX, BRUTE_FORCE_MAX_N, EXACT, approx_minimal_time,
                      brute_force_minimal_time, check_geometric_condition,
                      configuration_distance, exact_minimal_time, sorted_pairing)
from .pipeline import plan as run_planner
from .scenario import Scenario, load_scenario, scenario_hash
from .transport import EXHAUSTIVE_MAX_N, exhaustive_assignment, hungarian

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SYNTHESIS, EXIT_VERIFY = 0, 1, 2, 3, 4

_EXIT_FOR = [
    ((InfeasibleScenario, HorizonTooShort, IntegrationDiverged), EXIT_INFEASIBLE),
    ((WaypointNotFound, InfeasibleAssignment, RadiiDegenerate, PerturbationFailed), EXIT_SYNTHESIS),
    ((ScenarioError, SizeMismatch, TooLargeN, OSError, ValueError, KeyError), EXIT_USAGE),
]


class VerificationFailed(Exception):
    pass


def _mode(text: str) -> str:
    return APPROX if text in ("approx", APPROX) else EXACT


def _labels(mode: str):
    return ("M_a", "M*_a") if mode == APPROX else ("M_e", "M*_e")


def _num(v) -> str:
    return "-" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.10g}"


# ---------------------------------------------------------------- min-time

def cmd_min_time(scenario: Scenario, mode: str, as_json: bool = False, out=None) -> int:
    out = sys.stdout if out is None else out
    fn = approx_minimal_time if mode == APPROX else exact_minimal_time
    report = fn(scenario.field, scenario.initial, scenario.target, scenario.region, scenario.params)
    if as_json:
        data = {"scenario_hash": scenario_hash(scenario), "report": report.to_dict()}
        out.write(json.dumps(data, indent=1) + "\n")
    else:
        m, ms = _labels(mode)
        h = report.hitting
        out.write(f"scenario {scenario.name or '-'}: {scenario.n_agents} agent(s), "
                  f"dimension {scenario.dimension}, mode {mode}\n")
        if report.feasible:
            out.write(f"infimum time        {m}  = {report.infimum_time:.12g}\n")
            out.write(f"actuation threshold {ms} = {report.actuation_threshold:.12g}\n")
            out.write("pairing (initial -> target): "
                      + ", ".join(f"{i}->{j}" for i, j in enumerate(report.pairing)) + "\n")
        out.write("agent        t0      t0_bar          t1      t1_bar\n")
        for i in range(scenario.n_agents):
            out.write(f"{i:5d} " + " ".join(f"{_num(v):>11}" for v in
                                            (h.t0[i], h.t0_bar[i], h.t1[i], h.t1_bar[i])) + "\n")
    if not report.feasible:
        geo = check_geometric_condition(scenario.field, scenario.initial, scenario.target,
                                        scenario.region, scenario.params, hitting=report.hitting)
        raise InfeasibleScenario(geo.describe(), geo)
    return EXIT_OK


# ---------------------------------------------------------------- plan

def cmd_plan(scenario: Scenario, mode: str, T: Optional[float] = None,
             out_path: Optional[str] = None, out=None) -> PlanFile:
    out = sys.stdout if out is None else out
    outcome = run_planner(scenario.field, scenario.initial, scenario.target, scenario.region,
                          scenario.params, mode, T, scenario.params.epsilon)
    check = verify_caratheodory(outcome.plan, scenario.field, scenario.region,
                                seed=scenario.params.seed)
    planfile = PlanFile(outcome.plan, outcome.report, scenario_hash(scenario), mode,
                        verification_dict(check))
    if not check.passed:
        raise VerificationFailed(
            f"control admissibility check failed: sup {check.sup_norm:.6g} vs bound "
            f"{check.bound:.6g}, Lipschitz ratio {check.lipschitz_ratio:.6g} vs "
            f"{check.lipschitz_budget:.6g}")
    m, _ = _labels(mode)
    msg = (f"{m} = {outcome.report.infimum_time:.12g}, T = {outcome.plan.horizon:.12g}, "
           f"permutation {[int(j) for j in outcome.plan.permutation]}, "
           f"min_separation {outcome.plan.min_separation:.6g}\n")
    if out_path is None:
        out.write(planfile.to_json())
        sys.stderr.write(msg)
    else:
        save_plan(out_path, planfile)
        out.write(msg + f"plan written to {out_path}\n")
    return planfile


# ---------------------------------------------------------------- simulate

def cmd_simulate(scenario: Scenario, plan_path: str, out_path: Optional[str] = None,
                 out=None) -> dict:
    out = sys.stdout if out is None else out
    planfile = load_plan(plan_path)
    if planfile.scenario_hash != scenario_hash(scenario):
        raise ScenarioError(f"plan/scenario mismatch: {plan_path} was built for a different "
                            "scenario (hash differs)")
    p = scenario.params
    result = simulate(planfile.plan, scenario.initial, scenario.field, scenario.region, p.step,
                      p.output_stride, target=scenario.target, working_box=p.box_arrays())
    summary = simulation_summary(result, planfile.plan.horizon)
    text = json.dumps(summary, indent=1) + "\n"
    if out_path is None:
        out.write(trajectory_csv(result))
        sys.stderr.write(text)
    else:
        atomic_write(out_path, trajectory_csv(result))
        atomic_write(str(Path(out_path).with_suffix(".summary.json")), text)
        out.write(text)
    return summary


# ---------------------------------------------------------------- check

def parse_sizes(text: str) -> list:
    """``"2..8"``, ``"3,5,7"`` or ``"6"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            sizes = list(range(lo, hi + 1))
        else:
            sizes = [int(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"bad size list {text!r}; use e.g. 2..8 or 3,5") from None
    if not sizes or min(sizes) < 1:
        raise ValueError("sizes must be positive")
    return sizes


def run_checks(sizes, trials: int, seed: int) -> dict:
    """Randomized oracle comparisons; returns ``{suite: [passed, failed]}``."""
    too_big = [n for n in sizes if n > BRUTE_FORCE_MAX_N]
    if too_big:
        raise TooLargeN(f"oracle checks limited to n <= {BRUTE_FORCE_MAX_N}, got {too_big[0]}")
    rng = np.random.default_rng(seed)
    counts = {"min-time vs brute force": [0, 0], "assignment vs exhaustive": [0, 0],
              "distance axioms": [0, 0]}

    def tally(key, ok):
        counts[key][0 if ok else 1] += 1

    for n in sizes:
        for _ in range(trials):
            f, b = rng.uniform(0, 10, n), rng.uniform(0, 10, n)
            tally("min-time vs brute force",
                  abs(sorted_pairing(f, b)[0] - brute_force_minimal_time(f, b)[0]) <= 1e-12)
        if n <= EXHAUSTIVE_MAX_N:
            for _ in range(trials):
                cost = rng.uniform(0, 10, (n, n))
                tally("assignment vs exhaustive",
                      abs(hungarian(cost)[1] - exhaustive_assignment(cost)[1]) <= 1e-9)
        for _ in range(trials):
            a, b2, c = (rng.normal(size=(n, 2)) for _ in range(3))
            dab = configuration_distance(a, b2).value
            ok = (abs(configuration_distance(a, a).value) <= 1e-12
                  and abs(dab - configuration_distance(b2, a).value) <= 1e-9
                  and dab <= configuration_distance(a, c).value
                  + configuration_distance(c, b2).value + 1e-9)
            tally("distance axioms", ok)
    return counts


def cmd_check(sizes, trials: int, seed: int, scenario: Optional[Scenario] = None,
              out=None) -> int:
    out = sys.stdout if out is None else out
    counts = run_checks(sizes, trials, seed)
    if scenario is not None:
        rep = exact_minimal_time(scenario.field, scenario.initial, scenario.target,
                                 scenario.region, scenario.params)
        key = "scenario min-time vs brute force"
        counts[key] = [0, 0]
        if rep.feasible and scenario.n_agents <= BRUTE_FORCE_MAX_N:
            bf = brute_force_minimal_time(rep.hitting.t0, rep.hitting.t1)[0]
            counts[key][0 if abs(bf - rep.infimum_time) <= 1e-12 else 1] += 1
    out.write(f"seed {seed}, trials {trials}, sizes {','.join(str(n) for n in sizes)}\n")
    failed = 0
    for key, (ok, bad) in counts.items():
        out.write(f"{key:34s} passed {ok:6d}  failed {bad:6d}\n")
        failed += bad
    out.write("all checks passed\n" if not failed else f"{failed} check(s) FAILED\n")
    return EXIT_OK if not failed else EXIT_VERIFY


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdctl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crowdctl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("min-time", help="infimum time and actuation threshold")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=["exact", "approx"], default="exact")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("plan", help="synthesize a control plan")
    p.add_argument("scenario")
    p.add_argument("--mode", choices=["exact", "approx"], default="exact")
    p.add_argument("--time", type=float, default=None, metavar="T",
                   help="horizon (default: infimum time + delta)")
    p.add_argument("--out", default=None, help="plan file (default: stdout)")

    p = sub.add_parser("simulate", help="closed-loop run of a plan")
    p.add_argument("scenario")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default=None, help="trajectory CSV (default: stdout)")

    p = sub.add_parser("check", help="randomized oracle comparisons")
    p.add_argument("scenario", nargs="?", default=None)
    p.add_argument("--sizes", default="2..8")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "min-time":
            return cmd_min_time(load_scenario(args.scenario), _mode(args.mode), args.json)
        if args.command == "plan":
            scenario = load_scenario(args.scenario)
            try:
                cmd_plan(scenario, _mode(args.mode), args.time, args.out)
            except WaypointNotFound as exc:
                raise WaypointNotFound(f"{exc}; try --mode approx") from None
            return EXIT_OK
        if args.command == "simulate":
            cmd_simulate(load_scenario(args.scenario), args.plan, args.out)
            return EXIT_OK
        if args.command == "check":
            if args.trials < 1:
                raise ValueError("--trials must be positive")
            scenario = load_scenario(args.scenario) if args.scenario else None
            return cmd_check(parse_sizes(args.sizes), args.trials, args.seed, scenario)
    except VerificationFailed as exc:
        sys.stderr.write(f"crowdctl: verification failed: {exc}\n")
        return EXIT_VERIFY
    except Exception as exc:
        for types, code in _EXIT_FOR:
            if isinstance(exc, types):
                sys.stderr.write(f"crowdctl: error: {exc}\n")
                return code
        raise
    return EXIT_USAGE  # pragma: no cover - argparse enforces a command


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
