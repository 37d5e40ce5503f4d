import numpy as np
import pytest

from crowdctl.exceptions import HorizonTooShort, InfeasibleScenario, WaypointNotFound
from crowdctl.flow import CLOSURE, ConvexRegion, VectorField
from crowdctl.mintime import approx_minimal_time, configuration_distance
from crowdctl.params import Params
from crowdctl.pipeline import plan, plan_approximate, plan_exact, run
from crowdctl.scenario import bundled_scenario
from crowdctl.control import synthesize_plan

RIGHT = VectorField.constant([1.0, 0.0])


def crossing_scene():
    region = ConvexRegion.box([-1.0, -2.0], [1.0, 2.0])
    ys = np.array([-1.5, -0.5, 0.5, 1.5])
    x0 = np.c_[np.full(4, -3.0), ys]
    x1 = np.c_[np.full(4, 3.0), ys[::-1]]
    return region, x0, x1


def test_fig4_left_plan():
    s = bundled_scenario("fig4-left")
    out = plan_exact(s.field, s.initial, s.target, s.region, s.params)
    assert out.plan.horizon == pytest.approx(2.1, abs=1e-6)
    assert list(out.plan.permutation) == [0]


def test_crossing_scene_reorders():
    region, x0, x1 = crossing_scene()
    out = plan_exact(RIGHT, x0, x1, region)
    assert list(out.plan.permutation) != [0, 1, 2, 3]
    assert list(out.plan.permutation) == [3, 2, 1, 0]
    assert out.plan.min_separation > 0


def test_horizon_below_infimum():
    s = bundled_scenario("fig4-left")
    with pytest.raises(HorizonTooShort, match="horizon below infimum time"):
        plan_exact(s.field, s.initial, s.target, s.region, s.params, T=1.5)


def test_explicit_horizon():
    s = bundled_scenario("fig4-left")
    out = plan_exact(s.field, s.initial, s.target, s.region, s.params, T=3.0)
    assert out.plan.horizon == 3.0


def test_infeasible_names_agent():
    region = ConvexRegion.box([-2.0, -1.5], [0.0, 1.5])
    with pytest.raises(InfeasibleScenario, match="agent 1: backward") as info:
        plan_exact(RIGHT, [[-3.0, 0.0], [-3.0, 1.0]], [[1.0, 0.0], [-4.0, 1.0]], region,
                   Params(t_max=10.0))
    assert info.value.report.backward_blocked == [1]


def test_unknown_mode():
    s = bundled_scenario("fig4-left")
    with pytest.raises(ValueError):
        plan(s.field, s.initial, s.target, s.region, s.params, mode="fuzzy")


def test_tangency_exact_fails_at_approx_horizon():
    s = bundled_scenario("tangency")
    rep = approx_minimal_time(s.field, s.initial, s.target, s.region, s.params)
    with pytest.raises(WaypointNotFound):
        synthesize_plan(s.field, s.initial, s.target, s.region, rep.hitting,
                        rep.infimum_time + 0.1, 0.1, s.params, exit_mode=CLOSURE)
    with pytest.raises(HorizonTooShort):
        plan_exact(s.field, s.initial, s.target, s.region, s.params, T=rep.infimum_time + 0.1)


@pytest.mark.parametrize("eps", [1e-1, 1e-2])
def test_tangency_approximate(eps):
    s = bundled_scenario("tangency")
    outcome, res = run(s.field, s.initial, s.target, s.region, s.params, mode="approx", epsilon=eps)
    assert outcome.plan.horizon == pytest.approx(outcome.report.infimum_time + 0.1)
    assert configuration_distance(res.final, s.target).value <= eps
    assert np.array_equal(outcome.nominal_targets, s.target)


def test_approximate_on_transversal_scene():
    s = bundled_scenario("fig4-left")
    out = plan_approximate(s.field, s.initial, s.target, s.region, s.params)
    assert out.report.mode == "approximate"
    assert out.plan.horizon == pytest.approx(2.1, abs=1e-6)
