"""Space-time assignment between entry and exit waypoints.

Waypoints are placed slightly after each agent's entry into the control region
(forward from the initial point, backward from the target). The min-sum
assignment over the space-time Euclidean cost then yields straight segments that
do not cross, which is certified by :func:`check_non_crossing`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InfeasibleAssignment, TooLargeN, WaypointNotFound
from .flow import OPEN, ConvexRegion, HittingTimes, VectorField, flow_batch
from .params import Params, resolve

INF_SENTINEL = 1e18
WAYPOINT_SCAN_STEPS = 32


# ---------------------------------------------------------------- assignment

def _hungarian_duals(cost: np.ndarray):
    """Shortest-augmenting-path Hungarian method, O(n^3).

    Returns row->column assignment and dual potentials ``u, v`` with
    ``cost[i, j] - u[i] - v[j] >= 0`` and equality on assigned pairs.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=int)       # p[j]: row matched to column j (1-based, 0 = free)
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assignment = np.empty(n, dtype=int)
    assignment[p[1:] - 1] = np.arange(n)
    return assignment, u[1:], v[1:]


def _has_perfect_matching(adj, rows, cols_free) -> bool:
    match_col = {}

    def augment(r, seen):
        for c in adj[r]:
            if c in cols_free and c not in seen:
                seen.add(c)
                if c not in match_col or augment(match_col[c], seen):
                    match_col[c] = r
                    return True
        return False

    return all(augment(r, set()) for r in rows)


def _lexicographic_optimum(cost, u, v, assignment):
    """Smallest optimal permutation in lexicographic order.

    Every optimal assignment lives on the zero-reduced-cost edges of an optimal
    dual, so a greedy row-by-row choice with a matching feasibility check works.
    """
    n = cost.shape[0]
    scale = max(1.0, float(np.max(np.abs(cost))))
    reduced = cost - u[:, None] - v[None, :]
    tight = reduced <= 1e-12 * n * scale
    tight[np.arange(n), assignment] = True
    adj = [list(np.flatnonzero(tight[i])) for i in range(n)]
    result = np.empty(n, dtype=int)
    free = set(range(n))
    for i in range(n):
        for j in adj[i]:
            if j not in free:
                continue
            free.discard(j)
            if _has_perfect_matching(adj, range(i + 1, n), free):
                result[i] = j
                break
            free.add(j)
        else:  # pragma: no cover - the dual guarantees a completion
            return assignment
    return result


def hungarian(cost, infinite: Optional[np.ndarray] = None):
    """Min-sum assignment of a square cost matrix.

    ``infinite`` masks forbidden entries. Returns ``(perm, total)`` with
    ``perm[i]`` the column assigned to row ``i``; among optimal assignments the
    lexicographically smallest one is returned.
    """
    cost = np.array(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    n = cost.shape[0]
    if n == 0:
        return np.empty(0, dtype=int), 0.0
    if infinite is None:
        infinite = ~np.isfinite(cost) | (cost >= INF_SENTINEL)
    work = cost.copy()
    finite_vals = work[~infinite]
    # any permutation touching a masked entry costs more than every finite one
    big = (n + 1) * (float(np.max(np.abs(finite_vals))) if finite_vals.size else 1.0) + 1.0
    work[infinite] = big
    assignment, u, v = _hungarian_duals(work)
    perm = _lexicographic_optimum(work, u, v, assignment)
    if np.any(infinite[np.arange(n), perm]):
        raise InfeasibleAssignment("every permutation uses an infinite cost entry")
    return perm, float(work[np.arange(n), perm].sum())


EXHAUSTIVE_MAX_N = 8


def exhaustive_assignment(cost):
    """Enumerate every permutation; the independent oracle for :func:`hungarian`.

    Returns ``(perm, total)`` with the lexicographically smallest optimum.
    """
    from itertools import permutations

    cost = np.asarray(cost, dtype=float)
    n = cost.shape[0]
    if n > EXHAUSTIVE_MAX_N:
        raise TooLargeN(f"exhaustive assignment limited to n <= {EXHAUSTIVE_MAX_N}, got {n}")
    perms = np.array(list(permutations(range(n))), dtype=int).reshape(-1, n)
    totals = cost[np.arange(n), perms].sum(axis=1)
    best = int(np.argmin(totals))
    return perms[best], float(totals[best])


# ---------------------------------------------------------------- waypoints

@dataclass
class Waypoints:
    entry_points: np.ndarray   # y0_i, in the open region
    entry_times: np.ndarray    # s0_i
    exit_points: np.ndarray    # y1_j, in the open region
    exit_margins: np.ndarray   # s1_j, the segment of j ends at T - s1_j
    horizon: float
    delta: float

    @property
    def exit_times(self) -> np.ndarray:
        return self.horizon - self.exit_margins


def _pick_instants(field, points, t_enter, delta, sign, region, step, box):
    """Entry instants ``t + delta/6``; rows that graze the boundary are rescanned
    over ``(t, t + delta/3)``. Rows with no admissible instant come back NaN."""
    s = t_enter + delta / 6.0
    y = flow_batch(field, points, sign * s, step, box)
    bad = ~region.contains(y, OPEN)
    for k in range(1, WAYPOINT_SCAN_STEPS + 1):
        if not bad.any():
            break
        rows = np.flatnonzero(bad)
        cand = t_enter[rows] + (delta / 3.0) * k / (WAYPOINT_SCAN_STEPS + 1)
        yc = flow_batch(field, points[rows], sign * cand, step, box)
        ok = region.contains(yc, OPEN)
        s[rows[ok]] = cand[ok]
        y[rows[ok]] = yc[ok]
        bad[rows[ok]] = False
    s[bad] = np.nan
    return s, y


def choose_waypoints(field: VectorField, config0, config1, region: ConvexRegion,
                     hitting: HittingTimes, T: float, delta: float,
                     params: Optional[Params] = None, *, exit_mode: str = OPEN) -> Waypoints:
    """Entry instants ``t0_i + delta/6`` and exit margins ``t1_j + delta/6``,
    scanned over ``(t, t + delta/3)`` when the first guess grazes the boundary.

    ``exit_mode`` picks which backward entry times serve as exit reference.
    """
    params = resolve(params)
    box = params.box_arrays()
    if not delta > 0:
        raise ValueError("delta must be positive")
    t0 = hitting.t0
    t1 = hitting.backward(exit_mode)
    if np.any(np.isnan(t0)) or np.any(np.isnan(t1)):
        raise WaypointNotFound("hitting times missing; geometric condition fails")
    x0 = np.asarray(config0, dtype=float)
    x1 = np.asarray(config1, dtype=float)
    s0, y0 = _pick_instants(field, x0, t0, delta, 1.0, region, params.step, box)
    if np.any(np.isnan(s0)):
        i = int(np.flatnonzero(np.isnan(s0))[0])
        raise WaypointNotFound(f"no entry instant in the open region for agent {i}")
    s1, y1 = _pick_instants(field, x1, t1, delta, -1.0, region, params.step, box)
    if np.any(np.isnan(s1)):
        j = int(np.flatnonzero(np.isnan(s1))[0])
        raise WaypointNotFound(f"no exit instant in the open region for target {j} "
                               "(tangential entry; use the approximate pipeline)")
    return Waypoints(y0, s0, y1, s1, float(T), float(delta))


# ---------------------------------------------------------------- cost matrix

@dataclass
class CostMatrix:
    values: np.ndarray      # INF_SENTINEL where infinite
    infinite: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]


def build_cost_matrix(waypoints: Waypoints) -> CostMatrix:
    start = np.hstack([waypoints.entry_points, waypoints.entry_times[:, None]])
    end = np.hstack([waypoints.exit_points, waypoints.exit_times[:, None]])
    values = np.linalg.norm(start[:, None, :] - end[None, :, :], axis=-1)
    infinite = ~(waypoints.entry_times[:, None] < waypoints.exit_times[None, :])
    values[infinite] = INF_SENTINEL
    return CostMatrix(values, infinite)


def solve_assignment(cost: CostMatrix) -> np.ndarray:
    perm, _ = hungarian(cost.values, cost.infinite)
    return perm


def assignment_cost(cost: CostMatrix, perm) -> float:
    perm = np.asarray(perm)
    return float(cost.values[np.arange(cost.n), perm].sum())


# ---------------------------------------------------------------- segments

@dataclass
class SegmentBundle:
    start_points: np.ndarray
    start_times: np.ndarray
    end_points: np.ndarray
    end_times: np.ndarray
    permutation: np.ndarray
    min_separation: float = math.nan

    @classmethod
    def from_waypoints(cls, waypoints: Waypoints, perm) -> "SegmentBundle":
        perm = np.asarray(perm, dtype=int)
        bundle = cls(waypoints.entry_points.copy(), waypoints.entry_times.copy(),
                     waypoints.exit_points[perm].copy(), waypoints.exit_times[perm].copy(), perm)
        bundle.min_separation = check_non_crossing(bundle)
        return bundle

    @property
    def velocities(self) -> np.ndarray:
        return (self.end_points - self.start_points) / (self.end_times - self.start_times)[:, None]

    def position(self, i: int, t: float) -> np.ndarray:
        return self.start_points[i] + self.velocities[i] * (t - self.start_times[i])


def check_non_crossing(segments: SegmentBundle) -> float:
    """Smallest same-time distance between any two segments (inf for < 2).

    The squared distance is quadratic in time, minimized in closed form over the
    common time interval.
    """
    n = len(segments.start_points)
    vel = segments.velocities
    best = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            a = max(segments.start_times[i], segments.start_times[j])
            b = min(segments.end_times[i], segments.end_times[j])
            if a > b:
                continue
            pi = segments.start_points[i] + vel[i] * (a - segments.start_times[i])
            pj = segments.start_points[j] + vel[j] * (a - segments.start_times[j])
            d0 = pi - pj
            w = vel[i] - vel[j]
            ww = float(w @ w)
            tau = 0.0 if ww == 0 else min(max(-float(d0 @ w) / ww, 0.0), b - a)
            best = min(best, float(np.linalg.norm(d0 + tau * w)))
    return best
