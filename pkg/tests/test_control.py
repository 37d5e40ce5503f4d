import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdctl.control import (ControlPlan, bump, build_approx_targets, compute_radii,
                              eval_control, eval_control_batch, plan_trajectory,
                              sample_trajectories, simulate, verify_caratheodory)
from crowdctl.exceptions import RadiiDegenerate
from crowdctl.flow import (BACKWARD, OPEN, ConvexRegion, VectorField,
                           configuration_hitting_times, flow, hitting_time)
from crowdctl.params import Params
from crowdctl.pipeline import plan_exact, run
from crowdctl.scenario import bundled_scenario

from _scenes import constant_scene, rotation_scene, scene_diameter

RIGHT = VectorField.constant([1.0, 0.0])


@pytest.fixture(scope="module")
def fig4_left():
    s = bundled_scenario("fig4-left")
    outcome = plan_exact(s.field, s.initial, s.target, s.region, s.params)
    return s, outcome.plan


@pytest.fixture(scope="module")
def rotation_plan():
    field, region, x0, x1 = rotation_scene(np.random.default_rng(17), 5)
    return field, region, x0, x1, plan_exact(field, x0, x1, region).plan


def straight_plan(ys, box_half):
    """Agents moving right along y = const at unit speed, segment on [4, 20]."""
    n = len(ys)
    ys = np.asarray(ys, dtype=float)
    region = ConvexRegion.box([-10.0, -box_half], [10.0, box_half])
    plan = ControlPlan(24.0, np.arange(n), np.c_[np.full(n, -12.0), ys], np.c_[np.full(n, 12.0), ys],
                       np.c_[np.full(n, -8.0), ys], np.full(n, 4.0), np.c_[np.full(n, 8.0), ys],
                       np.full(n, 4.0), np.zeros(n), np.zeros(n), 0.0, 0.2, 1e-3)
    return plan, region


class TestBump:
    def test_plateaus(self):
        assert bump(0.0, 1.0, 2.0) == 1.0
        assert bump(1.0, 1.0, 2.0) == 1.0
        assert bump(2.0, 1.0, 2.0) == 0.0
        assert bump(5.0, 1.0, 2.0) == 0.0

    def test_midpoint(self):
        assert bump(1.5, 1.0, 2.0) == pytest.approx(0.5, abs=1e-15)

    @given(st.floats(0, 3), st.floats(0, 3))
    def test_monotone_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert 0.0 <= bump(hi, 0.5, 2.0) <= bump(lo, 0.5, 2.0) <= 1.0

    def test_slope_bound(self):
        rho = np.linspace(1.0, 2.0, 100_001)
        slope = np.abs(np.diff(bump(rho, 1.0, 2.0))) / np.diff(rho)
        assert slope.max() <= 1.875 + 1e-6


class TestPlanTrajectory:
    def test_endpoints(self, fig4_left):
        s, plan = fig4_left
        assert np.array_equal(plan_trajectory(plan, 0, 0.0, s.field), s.initial[0])
        assert np.array_equal(plan_trajectory(plan, 0, plan.horizon, s.field), s.target[plan.permutation[0]])

    def test_midpoint_on_segment(self, fig4_left):
        s, plan = fig4_left
        p = plan_trajectory(plan, 0, plan.horizon / 2, s.field)
        assert -2.0 < p[0] < 0.0 and s.region.contains(p, OPEN)

    def test_out_of_range(self, fig4_left):
        s, plan = fig4_left
        with pytest.raises(ValueError):
            plan_trajectory(plan, 0, -0.1, s.field)

    def test_continuity_at_phase_boundaries(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        for i in range(plan.n_agents):
            for edge in (plan.window_start[i], plan.window_end[i]):
                a = plan_trajectory(plan, i, edge - 1e-9, field)
                b = plan_trajectory(plan, i, edge, field)
                assert np.linalg.norm(a - b) <= 1e-6

    def test_sampled_agrees_with_pointwise(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        times = np.linspace(0, plan.horizon, 37)
        Z = sample_trajectories(plan, times, field)
        for k in (0, 9, 18, 27, 36):
            for i in range(plan.n_agents):
                assert np.linalg.norm(Z[k, i] - plan_trajectory(plan, i, times[k], field)) <= 1e-9


class TestRadii:
    def test_single_agent_clearance_one(self):
        plan, region = straight_plan([0.0], 1.0)
        r, R = compute_radii(plan, RIGHT, region)
        assert R[0] == pytest.approx(0.45) and r[0] == pytest.approx(0.225)

    def test_pair_dominates(self):
        plan, region = straight_plan([0.0, 0.2], 5.0)
        r, R = compute_radii(plan, RIGHT, region)
        assert np.allclose(R, 0.045) and np.allclose(r, 0.0225)

    def test_crossing_rejected(self):
        plan, region = straight_plan([0.0, 0.2], 5.0)
        from dataclasses import replace
        with pytest.raises(RadiiDegenerate):
            compute_radii(replace(plan, min_separation=0.0), RIGHT, region)

    def test_invariants_hold(self, rotation_plan):
        field, region, _, _, plan = rotation_plan
        assert np.all((0 < plan.inner_radii) & (plan.inner_radii < plan.outer_radii))
        times = np.linspace(0, plan.horizon, 301)
        Z = sample_trajectories(plan, times, field)
        for i in range(plan.n_agents):
            seg = (times >= plan.window_start[i]) & (times <= plan.window_end[i])
            assert np.all(region.clearance(Z[seg, i]) >= plan.outer_radii[i])
        for i in range(plan.n_agents):
            for j in range(i + 1, plan.n_agents):
                gap = np.linalg.norm(Z[:, i] - Z[:, j], axis=1)
                assert gap.min() > plan.outer_radii[i] + plan.outer_radii[j]


class TestEvalControl:
    def test_center_gives_segment_velocity(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        i = 0
        t = 0.5 * (plan.window_start[i] + plan.window_end[i])
        z = plan.centers(t, [i])[0]
        assert np.allclose(field(z) + eval_control(plan, z, t, field), plan.velocities[i], atol=1e-12)

    def test_outer_cutoff(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        t = 0.5 * (plan.window_start[0] + plan.window_end[0])
        z = plan.centers(t, [0])[0] + np.array([plan.outer_radii[0], 0.0])
        assert np.array_equal(eval_control(plan, z, t, field), [0.0, 0.0])

    def test_half_radius(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        t = 0.5 * (plan.window_start[0] + plan.window_end[0])
        rho = 0.5 * (plan.inner_radii[0] + plan.outer_radii[0])
        x = plan.centers(t, [0])[0] + np.array([0.0, rho])
        expect = 0.5 * (plan.velocities[0] - field(x))
        assert np.allclose(eval_control(plan, x, t, field), expect, atol=1e-12)

    def test_outside_windows(self, fig4_left):
        s, plan = fig4_left
        z = plan_trajectory(plan, 0, 0.5, s.field)
        assert np.array_equal(eval_control(plan, z, 0.5, s.field), [0.0, 0.0])

    def test_batch_matches_pointwise(self, rotation_plan):
        field, _, _, _, plan = rotation_plan
        rng = np.random.default_rng(3)
        t = np.sort(rng.uniform(0, plan.horizon, 200))
        i = rng.integers(plan.n_agents, size=200)
        x = sample_trajectories(plan, t, field)[np.arange(200), i]
        x += rng.normal(scale=0.5 * plan.outer_radii.min(), size=x.shape)
        single = np.array([eval_control(plan, p, s, field) for p, s in zip(x, t)])
        assert np.allclose(eval_control_batch(plan, x, t, field), single, atol=1e-12)

    def test_support_inside_region(self, rotation_plan):
        field, region, _, _, plan = rotation_plan
        rng = np.random.default_rng(4)
        x = rng.uniform(-3, 3, (40_000, 2))
        x = x[~region.contains(x, OPEN)][:10_000]
        t = rng.uniform(0, plan.horizon, len(x))
        assert len(x) == 10_000
        assert np.all(eval_control_batch(plan, x, t, field) == 0.0)


class TestSimulate:
    def test_fig4_left(self, fig4_left):
        s, plan = fig4_left
        res = simulate(plan, s.initial, s.field, s.region)
        assert res.endpoint_error <= 1e-2
        assert np.all(np.isfinite(res.trajectories))
        assert res.times[0] == 0.0 and res.times[-1] == plan.horizon

    def test_zero_plan_is_free_flow(self):
        region = ConvexRegion.box([-1.0, -1.0], [1.0, 1.0])
        x0 = np.array([[-3.0, 0.0], [-2.0, 0.5]])
        plan = ControlPlan.zero(x0, x0 + 4.0, 4.0)
        res = simulate(plan, x0, RIGHT, region)
        assert np.allclose(res.final, x0 + [4.0, 0.0], atol=1e-12)
        assert res.control_sup_norm == 0.0

    @pytest.mark.parametrize("seed", range(20))
    def test_random_five_agents(self, seed):
        maker = constant_scene if seed % 2 == 0 else rotation_scene
        field, region, x0, x1 = maker(np.random.default_rng(100 + seed), 5)
        outcome, res = run(field, x0, x1, region)
        assert res.endpoint_error <= 1e-2 * scene_diameter(x0, x1)
        assert sorted(res.matching) == list(range(5))

    def test_matching_is_plan_permutation(self, rotation_plan):
        field, region, x0, x1, plan = rotation_plan
        res = simulate(plan, x0, field, region)
        assert np.array_equal(res.matching, plan.permutation)

    def test_step_halving(self, rotation_plan):
        field, region, x0, _, plan = rotation_plan
        coarse = simulate(plan, x0, field, region, step=2e-3).endpoint_error
        fine = simulate(plan, x0, field, region, step=1e-3).endpoint_error
        assert fine <= max(coarse, 1e-10)

    def test_stride(self, fig4_left):
        s, plan = fig4_left
        res = simulate(plan, s.initial, s.field, s.region, output_stride=100)
        assert len(res.times) <= plan.horizon / (100 * 1e-3) + 12


class TestApproxTargets:
    def test_inside_unchanged(self):
        region = ConvexRegion.box([-2.0, -1.5], [0.0, 1.5])
        x1 = np.array([[-1.0, 0.0]])
        h = configuration_hitting_times(RIGHT, x1, x1, region)
        assert np.array_equal(build_approx_targets(RIGHT, x1, region, h, 1e-2), x1)

    def test_transversal(self):
        s = bundled_scenario("fig4-right")
        h = configuration_hitting_times(s.field, s.initial, s.target, s.region, s.params)
        eps = 1e-2
        y = build_approx_targets(s.field, s.target, s.region, h, eps)
        assert np.linalg.norm(y - s.target) <= eps
        t1 = hitting_time(s.field, y[0], s.region, BACKWARD, OPEN)
        assert t1 <= h.t1_bar[0] + 1e-6

    @pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
    def test_tangency_unlocked(self, eps):
        s = bundled_scenario("tangency")
        h = configuration_hitting_times(s.field, s.initial, s.target, s.region, s.params)
        y = build_approx_targets(s.field, s.target, s.region, h, eps)
        assert np.linalg.norm(y - s.target) <= eps
        p = flow(s.field, y[0], -h.t1_bar[0])
        assert s.region.contains(p, OPEN)


class TestCaratheodory:
    def test_valid_plan(self, rotation_plan):
        field, region, _, _, plan = rotation_plan
        rep = verify_caratheodory(plan, field, region)
        assert rep.sup_norm <= plan.bound + 1e-9
        assert rep.passed

    def test_zero_plan(self):
        region = ConvexRegion.box([-1.0, -1.0], [1.0, 1.0])
        plan = ControlPlan.zero([[-3.0, 0.0]], [[3.0, 0.0]], 6.0)
        rep = verify_caratheodory(plan, RIGHT, region, samples=2000)
        assert rep.sup_norm == 0.0 and rep.passed

    def test_fig4_left_finite_ratio(self, fig4_left):
        s, plan = fig4_left
        rep = verify_caratheodory(plan, s.field, s.region, samples=10_000)
        assert math.isfinite(rep.lipschitz_ratio) and rep.samples == 10_000
        assert rep.passed

    def test_deterministic(self, fig4_left):
        s, plan = fig4_left
        a = verify_caratheodory(plan, s.field, s.region, seed=5)
        b = verify_caratheodory(plan, s.field, s.region, seed=5)
        assert a == b


def test_plan_round_trip(rotation_plan):
    plan = rotation_plan[-1]
    import json
    back = ControlPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    for name in ("entry_points", "entry_times", "exit_points", "exit_margins", "inner_radii",
                 "outer_radii", "initial", "targets", "permutation"):
        assert np.array_equal(getattr(back, name), getattr(plan, name))
    assert back.horizon == plan.horizon and back.bound == plan.bound
    assert back.min_separation == plan.min_separation


def test_single_agent_round_trip(fig4_left):
    plan = fig4_left[1]
    import json
    text = json.dumps(plan.to_dict(), allow_nan=False)
    assert ControlPlan.from_dict(json.loads(text)).min_separation == math.inf


def test_params_default_used():
    assert Params().radius_samples == 512
