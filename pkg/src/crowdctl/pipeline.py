"""End-to-end steering: minimal time, optimal permutation, control, simulation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .control import (ControlPlan, SimulationResult, build_approx_targets, simulate,
                      synthesize_plan)
from .exceptions import HorizonTooShort, InfeasibleScenario
from .flow import BACKWARD, CLOSURE, OPEN, ConvexRegion, HittingTimes, VectorField, entry_times
from .mintime import (APPROX, EXACT, MinimalTimeReport, approx_minimal_time,
                      check_geometric_condition, exact_minimal_time, minimal_time_from_hitting)
from .params import Params, resolve


@dataclass
class PlanOutcome:
    plan: ControlPlan
    report: MinimalTimeReport
    nominal_targets: np.ndarray   # what the caller asked for; plan.targets may be perturbed


def _require_feasible(report: MinimalTimeReport, field, config0, config1, region, params):
    if report.feasible:
        return
    geo = check_geometric_condition(field, config0, config1, region, params,
                                    hitting=report.hitting)
    raise InfeasibleScenario(geo.describe() or "geometric condition fails", geo)


def _horizon(report: MinimalTimeReport, T: Optional[float], params: Params) -> float:
    if T is None:
        return report.infimum_time + params.delta
    if not T > report.infimum_time:
        raise HorizonTooShort(f"horizon below infimum time ({T:g} <= {report.infimum_time:.9g})")
    return float(T)


def plan_exact(field: VectorField, config0, config1, region: ConvexRegion,
               params: Optional[Params] = None, T: Optional[float] = None,
               report: Optional[MinimalTimeReport] = None) -> PlanOutcome:
    """Plan an exact steering at ``T`` (default: infimum time + delta)."""
    params = resolve(params)
    if report is None:
        report = exact_minimal_time(field, config0, config1, region, params)
    _require_feasible(report, field, config0, config1, region, params)
    T = _horizon(report, T, params)
    plan = synthesize_plan(field, config0, config1, region, report.hitting, T,
                           T - report.infimum_time, params)
    return PlanOutcome(plan, report, np.asarray(config1, dtype=float))


def plan_approximate(field: VectorField, config0, config1, region: ConvexRegion,
                     params: Optional[Params] = None, T: Optional[float] = None,
                     epsilon: Optional[float] = None,
                     report: Optional[MinimalTimeReport] = None) -> PlanOutcome:
    """Plan a steering into the ``epsilon``-neighbourhood of ``config1``.

    Targets whose backward trajectory only grazes the region are nudged so that
    it crosses the open region, then the exact planner is run on the nudged
    configuration.
    """
    params = resolve(params)
    epsilon = params.epsilon if epsilon is None else epsilon
    if report is None:
        report = approx_minimal_time(field, config0, config1, region, params)
    _require_feasible(report, field, config0, config1, region, params)
    T = _horizon(report, T, params)
    hitting = report.hitting
    y1 = build_approx_targets(field, config1, region, hitting, epsilon, params)
    back = entry_times(field, y1, region, BACKWARD, (OPEN, CLOSURE), params.t_max,
                       params.step, params.box_arrays())
    hit_y = HittingTimes(hitting.t0, hitting.t0_bar, back[OPEN], back[CLOSURE], hitting.horizon)
    rep_y = minimal_time_from_hitting(hit_y, EXACT)
    if not rep_y.feasible or not T > rep_y.infimum_time:
        raise HorizonTooShort("perturbed targets are not reachable before the horizon")
    plan = synthesize_plan(field, config0, y1, region, hit_y, T, T - rep_y.infimum_time, params)
    return PlanOutcome(plan, report, np.asarray(config1, dtype=float))


def plan(field, config0, config1, region, params=None, mode: str = EXACT, T=None,
         epsilon=None) -> PlanOutcome:
    if mode == EXACT:
        return plan_exact(field, config0, config1, region, params, T)
    if mode in (APPROX, "approx"):
        return plan_approximate(field, config0, config1, region, params, T, epsilon)
    raise ValueError(f"unknown mode {mode!r}")


def run(field, config0, config1, region, params=None, mode: str = EXACT, T=None,
        epsilon=None) -> tuple[PlanOutcome, SimulationResult]:
    params = resolve(params)
    outcome = plan(field, config0, config1, region, params, mode, T, epsilon)
    result = simulate(outcome.plan, config0, field, region, params.step, params.output_stride,
                      target=outcome.nominal_targets, working_box=params.box_arrays())
    return outcome, result
