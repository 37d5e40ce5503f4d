"""Control synthesis: planned trajectories, tubes, the localized control field
and the closed-loop simulator.

Each agent follows its free flow until its entry instant, then a straight
segment inside the control region, then the free flow again into its target.
The control is supported on a moving ball around the segment point; inside the
inner ball it cancels the drift and imposes the segment velocity, and a quintic
smoothstep fades it out towards the outer ball.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ._concurrency import map_tasks
from .exceptions import PerturbationFailed, RadiiDegenerate
from .flow import (CLOSURE, OPEN, ConvexRegion, HittingTimes, VectorField, _check_state,
                   flow, flow_samples)
from .mintime import configuration_distance
from .params import Params, resolve
from .transport import (SegmentBundle, Waypoints, build_cost_matrix, choose_waypoints,
                        solve_assignment)

RADIUS_FACTOR = 0.45
INNER_FRACTION = 0.5
MAX_SHRINKS = 6
MIN_RADIUS = 1e-9
BUMP_SLOPE = 1.875  # max |d/ds| of the quintic smoothstep


def bump(rho, r, R):
    """1 inside ``r``, 0 beyond ``R``, C2 quintic smoothstep in between."""
    rho = np.asarray(rho, dtype=float)
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    width = np.where(R > r, R - r, 1.0)
    s = np.clip((rho - r) / width, 0.0, 1.0)
    out = 1.0 - s ** 3 * (10.0 - 15.0 * s + 6.0 * s * s)
    out = np.where(rho <= r, 1.0, out)
    return np.where(rho >= R, 0.0, out)


@dataclass
class ControlPlan:
    """Everything needed to evaluate the control field on ``[0, horizon]``.

    ``entry_*`` arrays are indexed by initial agent, ``exit_*`` arrays by target
    index; agent ``i`` is steered to ``targets[permutation[i]]``.
    """

    horizon: float
    permutation: np.ndarray
    initial: np.ndarray
    targets: np.ndarray
    entry_points: np.ndarray
    entry_times: np.ndarray
    exit_points: np.ndarray
    exit_margins: np.ndarray
    inner_radii: np.ndarray
    outer_radii: np.ndarray
    bound: float = 0.0
    min_separation: float = math.inf
    step: float = 1e-3

    @property
    def n_agents(self) -> int:
        return len(self.initial)

    @property
    def window_start(self) -> np.ndarray:
        return self.entry_times

    @property
    def window_end(self) -> np.ndarray:
        return self.horizon - self.exit_margins[self.permutation]

    @property
    def segment_start(self) -> np.ndarray:
        return self.entry_points

    @property
    def segment_end(self) -> np.ndarray:
        return self.exit_points[self.permutation]

    @property
    def velocities(self) -> np.ndarray:
        """Constant segment velocities ``w_i``."""
        span = self.window_end - self.window_start
        return (self.segment_end - self.segment_start) / span[:, None]

    def active(self, t: float) -> np.ndarray:
        return (self.window_start <= t) & (t <= self.window_end)

    def centers(self, t: float, idx) -> np.ndarray:
        return self.segment_start[idx] + self.velocities[idx] * (t - self.window_start[idx])[:, None]

    def segments(self) -> SegmentBundle:
        bundle = SegmentBundle(self.segment_start, self.window_start, self.segment_end,
                               self.window_end, self.permutation)
        bundle.min_separation = self.min_separation
        return bundle

    @classmethod
    def zero(cls, initial, targets, horizon: float) -> "ControlPlan":
        """A plan whose control windows are all empty."""
        initial = np.asarray(initial, dtype=float)
        n = len(initial)
        full = np.full(n, float(horizon))
        return cls(float(horizon), np.arange(n), initial, np.asarray(targets, dtype=float),
                   initial.copy(), full, np.asarray(targets, dtype=float).copy(), full.copy(),
                   np.zeros(n), np.zeros(n))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "permutation": [int(j) for j in self.permutation],
            "initial": self.initial.tolist(),
            "targets": self.targets.tolist(),
            "entry_points": self.entry_points.tolist(),
            "entry_times": self.entry_times.tolist(),
            "exit_points": self.exit_points.tolist(),
            "exit_margins": self.exit_margins.tolist(),
            "inner_radii": self.inner_radii.tolist(),
            "outer_radii": self.outer_radii.tolist(),
            "bound": self.bound,
            # JSON has no infinity; a single agent has no separation to report
            "min_separation": self.min_separation if math.isfinite(self.min_separation) else None,
            "step": self.step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlPlan":
        arr = lambda k: np.array(data[k], dtype=float)  # noqa: E731
        return cls(
            horizon=float(data["horizon"]),
            permutation=np.array(data["permutation"], dtype=int),
            initial=arr("initial"), targets=arr("targets"),
            entry_points=arr("entry_points"), entry_times=arr("entry_times"),
            exit_points=arr("exit_points"), exit_margins=arr("exit_margins"),
            inner_radii=arr("inner_radii"), outer_radii=arr("outer_radii"),
            bound=float(data["bound"]), min_separation=(math.inf if data["min_separation"] is None
                            else float(data["min_separation"])),
            step=float(data["step"]),
        )


def plan_trajectory(plan: ControlPlan, i: int, t: float, field: VectorField,
                    step: Optional[float] = None) -> np.ndarray:
    """Planned position of agent ``i`` at time ``t`` (segment phase includes its ends)."""
    if not 0.0 <= t <= plan.horizon:
        raise ValueError(f"time {t} outside [0, {plan.horizon}]")
    step = plan.step if step is None else step
    ws, we = plan.window_start[i], plan.window_end[i]
    if t < ws:
        return flow(field, plan.initial[i], t, step)
    if t <= we:
        return plan.segment_start[i] + plan.velocities[i] * (t - ws)
    return flow(field, plan.targets[plan.permutation[i]], t - plan.horizon, step)


def sample_trajectories(plan: ControlPlan, times, field: VectorField,
                        step: Optional[float] = None) -> np.ndarray:
    """Planned positions at sorted ``times``, shape ``(len(times), n, d)``."""
    times = np.asarray(times, dtype=float)
    step = plan.step if step is None else step
    back = field.reversed()
    vel = plan.velocities

    ws, we = plan.window_start, plan.window_end
    n, d = plan.initial.shape
    pre_t = times[times < ws.max()] if n else times[:0]
    post_t = times[times > we.min()] if n else times[:0]

    def forward(_):
        return flow_samples(field, plan.initial, pre_t, step)

    def backward(_):
        dur = plan.horizon - post_t[::-1]
        return flow_samples(back, plan.targets[plan.permutation], dur, step)[::-1]

    fw, bw = map_tasks(lambda task: task(None), [forward, backward])
    out = np.empty((len(times), n, d))
    for i in range(n):
        pre = times < ws[i]
        post = times > we[i]
        mid = ~pre & ~post
        out[pre, i] = fw[: pre.sum(), i]
        out[mid, i] = plan.segment_start[i] + np.outer(times[mid] - ws[i], vel[i])
        out[post, i] = bw[len(post_t) - post.sum():, i]
    return out


def _radius_grid(plan: ControlPlan, n_samples: int) -> np.ndarray:
    grid = np.linspace(0.0, plan.horizon, n_samples)
    extra = np.concatenate([plan.window_start, plan.window_end])
    extra = extra[(extra >= 0) & (extra <= plan.horizon)]
    return np.unique(np.concatenate([grid, extra]))


def _radii_ok(Z, seg_mask, r_out, region):
    n = Z.shape[1]
    for i in range(n):
        pts = Z[seg_mask[:, i], i]
        if pts.size:
            probes = pts[:, None, :] + r_out[i] * region.normals[None, :, :]
            if not np.all(region.contains(probes, CLOSURE)):
                return False
    if n > 1:
        dist = np.linalg.norm(Z[:, :, None, :] - Z[:, None, :, :], axis=-1)
        need = r_out[:, None] + r_out[None, :]
        off = ~np.eye(n, dtype=bool)
        if np.any(dist[:, off] <= need[off]):
            return False
    return True


def compute_radii(plan: ControlPlan, field: VectorField, region: ConvexRegion,
                  params: Optional[Params] = None):
    """Tube radii ``(r, R)`` from sampled clearances, shrunk until the tube and
    disjointness invariants hold on the sample grid."""
    params = resolve(params)
    if not plan.min_separation > 0:
        raise RadiiDegenerate("straight segments cross; no disjoint tubes exist")
    times = _radius_grid(plan, params.radius_samples)
    Z = sample_trajectories(plan, times, field, plan.step)
    n = plan.n_agents
    seg_mask = (times[:, None] >= plan.window_start[None, :]) & (times[:, None] <= plan.window_end[None, :])
    d_omega = np.full(n, np.inf)
    for i in range(n):
        pts = Z[seg_mask[:, i], i]
        if pts.size:
            d_omega[i] = float(np.min(region.clearance(pts)))
    d_pair = np.full(n, np.inf)
    if n > 1:
        dist = np.linalg.norm(Z[:, :, None, :] - Z[:, None, :, :], axis=-1).min(axis=0)
        dist[np.diag_indices(n)] = np.inf
        d_pair = dist.min(axis=1)
    R = RADIUS_FACTOR * np.minimum(d_omega, d_pair / 2.0)
    if not np.all(np.isfinite(R)):
        raise RadiiDegenerate("no finite clearance available for tube radii")
    for _ in range(MAX_SHRINKS + 1):
        if np.min(R) < MIN_RADIUS:
            break
        if _radii_ok(Z, seg_mask, R, region):
            return INNER_FRACTION * R, R
        R = 0.5 * R
    raise RadiiDegenerate(f"tube radius fell below {MIN_RADIUS:g} (min R = {np.min(R):.3g})")


def control_bound(plan: ControlPlan, field: VectorField, n_samples: int = 512) -> float:
    """Upper bound of ``|w_i - v(x)|`` over the tubes."""
    vel = plan.velocities
    lip = field.lipschitz
    best = 0.0
    for i in range(plan.n_agents):
        ws, we = plan.window_start[i], plan.window_end[i]
        if not we >= ws:
            continue
        ts = np.linspace(ws, we, n_samples)
        pts = plan.segment_start[i] + np.outer(ts - ws, vel[i])
        gap = np.linalg.norm(vel[i] - field(pts), axis=-1)
        best = max(best, float(gap.max()) + lip * float(plan.outer_radii[i]))
    return best


def _control(plan: ControlPlan, x2, t, field, active, vel):
    idx = np.flatnonzero(active)
    out = np.zeros_like(x2)
    if idx.size == 0:
        return out
    centers = plan.segment_start[idx] + vel[idx] * (t - plan.window_start[idx])[:, None]
    rho = np.linalg.norm(x2[:, None, :] - centers[None, :, :], axis=-1)
    b = bump(rho, plan.inner_radii[idx], plan.outer_radii[idx])
    weight = b.sum(axis=1)
    hit = weight > 0
    if hit.any():
        out[hit] = b[hit] @ vel[idx] - weight[hit, None] * field(x2[hit])
    return out


def eval_control(plan: ControlPlan, x, t: float, field: VectorField) -> np.ndarray:
    """Control velocity ``u(x, t)``; zero outside every active outer ball."""
    x = np.asarray(x, dtype=float)
    x2 = np.atleast_2d(x)
    out = _control(plan, x2, t, field, plan.active(t), plan.velocities)
    return out.reshape(x.shape)


@dataclass
class SimulationResult:
    times: np.ndarray
    trajectories: np.ndarray        # (len(times), n, d)
    final: np.ndarray
    endpoint_error: float
    control_sup_norm: float
    matching: np.ndarray = field(default=None, repr=False)


def simulate(plan: ControlPlan, config0, field: VectorField, region: ConvexRegion,
             step: Optional[float] = None, output_stride: int = 10,
             target=None, working_box=None) -> SimulationResult:
    """Closed-loop RK4 run of ``x' = v(x) + 1_region(x) u(x, t)`` on ``[0, T]``.

    The time grid is split at every window start/end so that no RK4 step
    straddles a switch of the control; each piece uses equal sub-steps no longer
    than ``step``.
    """
    step = plan.step if step is None else step
    if not step > 0:
        raise ValueError("step must be positive")
    target = plan.targets if target is None else np.asarray(target, dtype=float)
    T = plan.horizon
    vel = plan.velocities
    marks = np.concatenate([[0.0, T], plan.window_start, plan.window_end])
    marks = np.unique(marks[(marks >= 0.0) & (marks <= T)])
    normals_t = region.normals.T
    open_level = region.offsets + region.threshold(OPEN)
    if field.kind == "constant":
        def free(xx):
            return field.offset
    else:
        mat_t, off = field.matrix.T, field.offset

        def free(xx):
            return xx @ mat_t + off

    def kernel(active):
        # the same law as eval_control, specialised to a fixed active set
        idx = np.flatnonzero(active)
        if idx.size == 0:
            if field.kind == "constant":
                return lambda xx, tt: (np.broadcast_to(field.offset, xx.shape), 0.0)
            return lambda xx, tt: (free(xx), 0.0)
        v_act = vel[idx]
        c0 = plan.segment_start[idx] - v_act * plan.window_start[idx][:, None]
        r_in = plan.inner_radii[idx]
        width = np.where(plan.outer_radii[idx] > r_in, plan.outer_radii[idx] - r_in, 1.0)

        def rhs(xx, tt):
            fx = free(xx)
            diff = xx[:, None, :] - (c0 + tt * v_act)[None, :, :]
            rho = np.sqrt(np.einsum("nmd,nmd->nm", diff, diff))
            sv = np.clip((rho - r_in) / width, 0.0, 1.0)
            b = 1.0 - sv ** 3 * (10.0 - 15.0 * sv + 6.0 * sv * sv)
            b[np.any(xx @ normals_t > open_level, axis=1)] = 0.0
            u = b @ v_act - b.sum(axis=1)[:, None] * fx
            return fx + u, float(np.sqrt(np.max(np.einsum("nd,nd->n", u, u))))

        return rhs

    x = np.array(config0, dtype=float)
    rec_t = [0.0]
    rec_x = [x.copy()]
    sup = 0.0
    count = 0
    for a, b in zip(marks[:-1], marks[1:]):
        if b - a <= 0:
            continue
        rhs = kernel(plan.active(0.5 * (a + b)))
        n_sub = max(1, int(math.ceil((b - a) / step - 1e-9)))
        h = (b - a) / n_sub
        for k in range(n_sub):
            t = a + k * h
            k1, s1 = rhs(x, t)
            k2, s2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
            k3, s3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
            k4, s4 = rhs(x + h * k3, t + h)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_state(x, working_box)
            sup = max(sup, s1, s2, s3, s4)
            count += 1
            if count % output_stride == 0:
                rec_t.append(a + (k + 1) * h)
                rec_x.append(x.copy())
    if rec_t[-1] != T:
        rec_t.append(T)
        rec_x.append(x.copy())
    dist = configuration_distance(x, target)
    return SimulationResult(np.array(rec_t), np.stack(rec_x), x, dist.value, sup, dist.matching)


def synthesize_plan(field: VectorField, config0, config1, region: ConvexRegion,
                    hitting: HittingTimes, T: float, delta: float,
                    params: Optional[Params] = None, *, exit_mode: str = OPEN) -> ControlPlan:
    """Waypoints, min-sum space-time assignment, non-crossing check, tube radii."""
    params = resolve(params)
    wp: Waypoints = choose_waypoints(field, config0, config1, region, hitting, T, delta,
                                     params, exit_mode=exit_mode)
    perm = solve_assignment(build_cost_matrix(wp))
    bundle = SegmentBundle.from_waypoints(wp, perm)
    n = len(perm)
    plan = ControlPlan(float(T), perm, np.asarray(config0, dtype=float).copy(),
                       np.asarray(config1, dtype=float).copy(), wp.entry_points,
                       wp.entry_times, wp.exit_points, wp.exit_margins, np.zeros(n),
                       np.zeros(n), 0.0, bundle.min_separation, params.step)
    r, R = compute_radii(plan, field, region, params)
    plan = replace(plan, inner_radii=r, outer_radii=R)
    return replace(plan, bound=control_bound(plan, field))


def _push_inside(field, x1, t_bar, region, epsilon, step):
    p = flow(field, x1, -t_bar, step)
    slack = region.slack(p)
    near = slack <= max(1e-6, 10 * region.boundary_tol)
    if not near.any():
        near = slack == slack.min()
    inward = -region.normals[near].mean(axis=0)
    norm = np.linalg.norm(inward)
    if norm == 0:
        inward = -region.normals[np.argmin(slack)]
    else:
        inward = inward / norm
    eta = epsilon / 4.0
    for _ in range(20):
        q = p + eta * inward
        y = flow(field, q, t_bar, step)
        if (np.linalg.norm(y - x1) <= epsilon
                and region.contains(flow(field, y, -t_bar, step), OPEN)):
            return y
        eta *= 0.5
    return None


def build_approx_targets(field: VectorField, config1, region: ConvexRegion,
                         hitting: HittingTimes, epsilon: float,
                         params: Optional[Params] = None) -> np.ndarray:
    """Targets within ``epsilon`` of ``config1`` whose backward flow at the
    closure entry time lies strictly inside the region."""
    params = resolve(params)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    x1 = np.asarray(config1, dtype=float)
    if np.any(np.isnan(hitting.t1_bar)):
        raise PerturbationFailed("closure entry time missing for some target")
    out = x1.copy()
    for i in range(len(x1)):
        if region.contains(x1[i], OPEN):
            continue
        y = _push_inside(field, x1[i], float(hitting.t1_bar[i]), region, epsilon, params.step)
        if y is None:
            raise PerturbationFailed(f"could not perturb target {i} within epsilon={epsilon:g}")
        out[i] = y
    return out


@dataclass
class CaratheodoryReport:
    sup_norm: float
    bound: float
    lipschitz_ratio: float
    lipschitz_budget: float
    time_breakpoints: int
    samples: int

    @property
    def bounded(self) -> bool:
        return self.sup_norm <= self.bound + 1e-9

    @property
    def lipschitz_ok(self) -> bool:
        return math.isfinite(self.lipschitz_ratio) and (
            self.lipschitz_ratio <= self.lipschitz_budget * (1 + 1e-6) + 1e-12)

    @property
    def passed(self) -> bool:
        return self.bounded and self.lipschitz_ok


def lipschitz_budget(plan: ControlPlan, field: VectorField) -> float:
    """Analytic bound on the spatial Lipschitz constant of the control."""
    width = plan.outer_radii - plan.inner_radii
    live = (plan.window_end >= plan.window_start) & (width > 0)
    if not live.any():
        return 0.0
    return field.lipschitz + plan.bound * BUMP_SLOPE / float(width[live].min())


def eval_control_batch(plan: ControlPlan, points, times, field: VectorField) -> np.ndarray:
    """Control velocity at ``points[k]`` and time ``times[k]`` for every k."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    t = np.asarray(times, dtype=float).reshape(-1)
    vel = plan.velocities
    active = (t[:, None] >= plan.window_start) & (t[:, None] <= plan.window_end)
    centers = plan.segment_start[None] + vel[None] * (t[:, None] - plan.window_start[None])[..., None]
    rho = np.linalg.norm(x[:, None, :] - centers, axis=-1)
    b = np.where(active, bump(rho, plan.inner_radii[None], plan.outer_radii[None]), 0.0)
    return b @ vel - b.sum(axis=1)[:, None] * field(x)


def verify_caratheodory(plan: ControlPlan, field: VectorField, region: ConvexRegion,
                        samples: int = 10_000, seed: int = 0) -> CaratheodoryReport:
    """Empirical boundedness and Lipschitz check of ``1_region * u``.

    Half of the probes sit near an active tube, half anywhere in the scene;
    each probe is paired with a nearby point for a finite-difference ratio.
    """
    rng = np.random.default_rng(seed)
    pts = np.vstack([plan.initial, plan.targets, plan.entry_points, plan.exit_points])
    lo, hi = pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0
    live = plan.outer_radii[plan.window_end >= plan.window_start]
    h = 1e-3 * float(np.min(live)) if live.size and np.min(live) > 0 else 1e-6
    d = plan.initial.shape[1]

    def u_at(x, t):
        u = eval_control_batch(plan, x, t, field)
        u[~region.contains(x, OPEN)] = 0.0
        return u

    t = rng.uniform(0.0, plan.horizon, samples)
    x = rng.uniform(lo, hi, (samples, d))
    # even probes near a random active tube, when one exists
    act = (t[:, None] >= plan.window_start) & (t[:, None] <= plan.window_end)
    near = (np.arange(samples) % 2 == 0) & act.any(axis=1)
    pick = np.argmax(act * rng.uniform(size=act.shape), axis=1)
    centers = plan.segment_start[pick] + plan.velocities[pick] * (t - plan.window_start[pick])[:, None]
    direction = rng.normal(size=(samples, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radial = 1.2 * plan.outer_radii[pick] * rng.uniform(size=samples)
    x[near] = centers[near] + radial[near, None] * direction[near]
    e = rng.normal(size=(samples, d))
    y = x + h * e / np.linalg.norm(e, axis=1, keepdims=True)
    ux, uy, uc = u_at(x, t), u_at(y, t), u_at(centers[near], t[near])
    sup = max(float(np.max(np.linalg.norm(ux, axis=1), initial=0.0)),
              float(np.max(np.linalg.norm(uy, axis=1), initial=0.0)),
              float(np.max(np.linalg.norm(uc, axis=1), initial=0.0)))
    ratio = float(np.max(np.linalg.norm(ux - uy, axis=1) / np.linalg.norm(x - y, axis=1)))
    breaks = np.unique(np.concatenate([plan.window_start, plan.window_end]))
    return CaratheodoryReport(sup, plan.bound, ratio, lipschitz_budget(plan, field),
                              int(breaks.size), samples)
