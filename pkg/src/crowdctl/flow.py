"""Velocity fields, the convex control region, flow maps and hitting times.

Trajectories are integrated with fixed-step classical RK4. All routines accept
either a single point of shape ``(d,)`` or a batch of shape ``(n, d)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog, minimize_scalar

from ._concurrency import map_tasks
from .exceptions import IntegrationDiverged
from .params import Params, resolve

FORWARD = "forward"
BACKWARD = "backward"
OPEN = "open"
CLOSURE = "closure"

_BISECT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class VectorField:
    """Autonomous affine field ``x -> matrix @ x + offset``.

    A constant field is the affine case with a zero matrix.
    """

    kind: str
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        offset = np.array(self.offset, dtype=float)
        if self.kind not in ("constant", "affine"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        d = offset.shape[0] if offset.ndim == 1 else -1
        if matrix.shape != (d, d):
            raise ValueError("field matrix must be d x d and offset of length d")
        if not (np.all(np.isfinite(matrix)) and np.all(np.isfinite(offset))):
            raise ValueError("field coefficients must be finite")
        matrix.setflags(write=False)
        offset.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "_matrix_t", np.ascontiguousarray(matrix.T))

    @classmethod
    def constant(cls, value) -> "VectorField":
        value = np.asarray(value, dtype=float)
        return cls("constant", np.zeros((value.size, value.size)), value)

    @classmethod
    def affine(cls, matrix, offset=None) -> "VectorField":
        matrix = np.asarray(matrix, dtype=float)
        if offset is None:
            offset = np.zeros(matrix.shape[0])
        return cls("affine", matrix, offset)

    @property
    def dimension(self) -> int:
        return self.offset.shape[0]

    @property
    def lipschitz(self) -> float:
        """Operator 2-norm of the matrix."""
        return float(np.linalg.norm(self.matrix, 2)) if self.matrix.size else 0.0

    def __call__(self, x):
        if self.kind == "constant":
            out = np.empty(np.shape(x))
            out[...] = self.offset
            return out
        return np.asarray(x, dtype=float) @ self._matrix_t + self.offset

    def reversed(self) -> "VectorField":
        return VectorField(self.kind, -self.matrix, -self.offset)

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"type": "constant", "value": self.offset.tolist()}
        return {"type": "affine", "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return (self.kind == other.kind and np.array_equal(self.matrix, other.matrix)
                and np.array_equal(self.offset, other.offset))

    def __hash__(self):
        return hash((self.kind, self.matrix.tobytes(), self.offset.tobytes()))


def eval_field(field: VectorField, x) -> np.ndarray:
    return field(x)


@dataclass(frozen=True, eq=False)
class ConvexRegion:
    """Intersection of half-spaces ``normal . x <= offset``.

    ``open`` membership demands a clearance of ``interior_margin`` inside every
    half-space, ``closure`` membership tolerates ``boundary_tol`` of slack.
    """

    normals: np.ndarray
    offsets: np.ndarray
    interior_margin: float = 1e-7
    boundary_tol: float = 1e-9

    def __post_init__(self):
        normals = np.atleast_2d(np.array(self.normals, dtype=float))
        offsets = np.array(self.offsets, dtype=float).reshape(-1)
        if normals.shape[0] != offsets.shape[0] or normals.shape[0] == 0:
            raise ValueError("need one offset per half-space and at least one half-space")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("half-space normals must have unit length (use from_halfspaces)")
        if not (self.interior_margin > 0 and self.boundary_tol >= 0):
            raise ValueError("interior_margin must be positive and boundary_tol non-negative")
        normals.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)
        center, clearance = self.chebyshev_center()
        if clearance <= self.interior_margin:
            raise ValueError("control region has an empty interior")

    @classmethod
    def from_halfspaces(cls, normals, offsets, **kw) -> "ConvexRegion":
        """Build a region from arbitrary (non-normalized) half-space normals."""
        normals = np.atleast_2d(np.asarray(normals, dtype=float))
        offsets = np.asarray(offsets, dtype=float).reshape(-1)
        norms = np.linalg.norm(normals, axis=1)
        if np.any(norms == 0):
            raise ValueError("half-space normal of zero length")
        return cls(normals / norms[:, None], offsets / norms, **kw)

    @classmethod
    def box(cls, lower, upper, **kw) -> "ConvexRegion":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]), **kw)

    @property
    def dimension(self) -> int:
        return self.normals.shape[1]

    def slack(self, x) -> np.ndarray:
        """Signed distance to each supporting hyperplane (positive inside)."""
        return self.offsets - np.asarray(x, dtype=float) @ self.normals.T

    def violation(self, x) -> np.ndarray:
        return -np.min(self.slack(x), axis=-1)

    def clearance(self, x) -> np.ndarray:
        """Distance from an interior point to the boundary (negative outside)."""
        return np.min(self.slack(x), axis=-1)

    def threshold(self, mode: str) -> float:
        if mode == OPEN:
            return -self.interior_margin
        if mode == CLOSURE:
            return self.boundary_tol
        raise ValueError(f"unknown membership mode {mode!r}")

    def contains(self, x, mode: str = OPEN):
        return self.violation(x) <= self.threshold(mode)

    def chebyshev_center(self):
        m, d = self.normals.shape
        c = np.zeros(d + 1)
        c[-1] = -1.0
        a_ub = np.hstack([self.normals, np.ones((m, 1))])
        bounds = [(None, None)] * d + [(0, 1e6)]
        res = linprog(c, A_ub=a_ub, b_ub=self.offsets, bounds=bounds, method="highs")
        if res.status != 0:
            return None, -np.inf
        return res.x[:d], float(res.x[-1])

    def to_dict(self) -> dict:
        return {"halfspaces": [{"normal": n.tolist(), "offset": float(c)}
                               for n, c in zip(self.normals, self.offsets)]}


def region_contains(region: ConvexRegion, x, mode: str = OPEN):
    return region.contains(x, mode)


def as_configuration(points, name: str = "configuration") -> np.ndarray:
    """Validate an ``(n, d)`` array of pairwise distinct points."""
    pts = np.array(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array of points")
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{name} contains non-finite coordinates")
    if min_pairwise_distance(pts) <= 0:
        raise ValueError(f"{name}: configuration not disjoint")
    return pts


def min_pairwise_distance(points) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return math.inf
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=-1)
    dist[np.diag_indices(len(pts))] = np.inf
    return float(dist.min())


def rk4_step(f: Callable, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_state(x, box):
    if not math.isfinite(float(np.sum(x))):
        raise IntegrationDiverged("non-finite state encountered")
    if box is not None:
        lo, hi = box
        if np.any(x < lo) or np.any(x > hi):
            raise IntegrationDiverged("trajectory left the working box")


def _n_steps(duration: float, step: float) -> int:
    return max(1, int(math.ceil(duration / step - 1e-9)))


def _integrate(f: Callable, x: np.ndarray, duration: float, step: float, box=None) -> np.ndarray:
    if isinstance(f, VectorField) and f.kind == "constant":
        # RK4 is exact for a constant field; a straight segment leaves a convex box
        # only if its endpoint does
        x = x + duration * f.offset
        _check_state(x, box)
        return x
    n = _n_steps(duration, step)
    for _ in range(n - 1):
        x = rk4_step(f, x, step)
        _check_state(x, box)
    x = rk4_step(f, x, duration - (n - 1) * step)
    _check_state(x, box)
    return x


def flow(field: VectorField, x0, t: float, step: float = 1e-3, working_box=None) -> np.ndarray:
    """RK4 approximation of the flow map at signed time ``t``.

    Negative ``t`` integrates the reversed field. The last step is shortened so
    that the integration lands exactly on ``t``.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    x = np.array(x0, dtype=float)
    if t == 0:
        return x
    f = field if t > 0 else field.reversed()
    return _integrate(f, x, abs(t), step, working_box)


def flow_batch(field: VectorField, points, times, step: float = 1e-3,
               working_box=None) -> np.ndarray:
    """Flow each row of ``points`` to its own signed time ``times[i]``.

    Uses the same step partition as :func:`flow`, so results agree bit for bit.
    """
    x = np.array(points, dtype=float)
    times = np.asarray(times, dtype=float)
    out = x.copy()
    for sign in (1.0, -1.0):
        rows = np.flatnonzero(sign * times > 0)
        if rows.size == 0:
            continue
        f = field if sign > 0 else field.reversed()
        dur = np.abs(times[rows])
        if f.kind == "constant":
            out[rows] = x[rows] + dur[:, None] * f.offset
            _check_state(out[rows], working_box)
            continue
        n_steps = np.array([_n_steps(d, step) for d in dur])
        last = dur - (n_steps - 1) * step
        cur = x[rows]
        common = int(n_steps.min()) - 1
        for _ in range(common):
            cur = rk4_step(f, cur, step)
            _check_state(cur, working_box)
        for k in range(common, int(n_steps.max())):
            live = n_steps > k
            h = np.where(n_steps - 1 == k, last, step)[live, None]
            cur[live] = rk4_step(f, cur[live], h)
            _check_state(cur[live], working_box)
        out[rows] = cur
    return out


def flow_samples(field: VectorField, x0, times, step: float = 1e-3, working_box=None) -> np.ndarray:
    """Flow of one point evaluated at non-negative increasing ``times``."""
    times = np.asarray(times, dtype=float)
    out = np.empty((len(times),) + np.shape(x0))
    x = np.array(x0, dtype=float)
    t_cur = 0.0
    for k, t in enumerate(times):
        if t < t_cur:
            raise ValueError("sample times must be non-decreasing")
        if t > t_cur:
            x = _integrate(field, x, t - t_cur, step, working_box)
            t_cur = t
        out[k] = x
    return out


@dataclass
class HittingTimes:
    """Per-agent entry times into the control region; NaN marks "no entry"."""

    t0: np.ndarray
    t0_bar: np.ndarray
    t1: np.ndarray
    t1_bar: np.ndarray
    horizon: float

    @property
    def n_agents(self) -> int:
        return len(self.t0)

    def forward(self, mode: str = OPEN) -> np.ndarray:
        return self.t0 if mode == OPEN else self.t0_bar

    def backward(self, mode: str = OPEN) -> np.ndarray:
        return self.t1 if mode == OPEN else self.t1_bar

    def to_dict(self) -> dict:
        def enc(a):
            return [None if np.isnan(v) else float(v) for v in a]
        return {"t0": enc(self.t0), "t0_bar": enc(self.t0_bar), "t1": enc(self.t1),
                "t1_bar": enc(self.t1_bar), "horizon": self.horizon}

    @classmethod
    def from_dict(cls, data: dict) -> "HittingTimes":
        def dec(a):
            return np.array([np.nan if v is None else v for v in a], dtype=float)
        return cls(dec(data["t0"]), dec(data["t0_bar"]), dec(data["t1"]),
                   dec(data["t1_bar"]), float(data["horizon"]))


def _refine(f, x_start, span, region, thr, step):
    """First time in ``[0, span]`` where the violation drops below ``thr``.

    If the endpoint is outside, look for a grazing minimum first.
    """
    def g(tau):
        if tau <= 0:
            return float(region.violation(x_start))
        return float(region.violation(_integrate(f, x_start, tau, step)))

    if g(span) <= thr:
        hi = span
    else:
        res = minimize_scalar(g, bounds=(0.0, span), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun > thr:
            return None
        hi = float(res.x)
    lo = 0.0
    while hi - lo > 0.5 * _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if g(mid) <= thr:
            hi = mid
        else:
            lo = mid
    return hi


def entry_times(field: VectorField, points, region: ConvexRegion, direction: str = FORWARD,
                modes=(OPEN,), t_max: float = 100.0, step: float = 1e-3,
                working_box=None) -> dict:
    """Batched first-entry times of ``points`` into ``region`` for each mode.

    The flow is sampled every ``step``; a membership transition, or a local
    minimum of the constraint violation between samples (grazing), triggers a
    refinement by bisection to 1e-9. Returns ``{mode: times}`` with NaN where no
    entry happens within ``t_max``.
    """
    if not (t_max > 0 and step > 0):
        raise ValueError("t_max and step must be positive")
    if direction not in (FORWARD, BACKWARD):
        raise ValueError(f"unknown direction {direction!r}")
    f = field if direction == FORWARD else field.reversed()
    x = np.atleast_2d(np.array(points, dtype=float))
    n = len(x)
    thresholds = {m: region.threshold(m) for m in modes}
    out = {m: np.full(n, np.nan) for m in modes}
    g = region.violation(x)
    for m in modes:
        out[m][g <= thresholds[m]] = 0.0

    # arrays below are restricted to the still-pending agents ``idx``
    idx = np.arange(n)
    pend = {m: np.isnan(out[m]) for m in modes}
    keep = np.zeros(n, dtype=bool)
    for m in modes:
        keep |= pend[m]
    idx, x_prev, g_prev = idx[keep], x[keep], g[keep]
    pend = {m: pend[m][keep] for m in modes}
    x_prev2 = g_prev2 = None
    h_prev = 0.0
    k = 0
    t = 0.0
    while t < t_max and idx.size:
        t_next = min((k + 1) * step, t_max)
        h = t_next - t
        x_new = rk4_step(f, x_prev, h)
        _check_state(x_new, working_box)
        g_new = region.violation(x_new)
        changed = False
        for m in modes:
            thr = thresholds[m]
            direct = pend[m] & (g_new <= thr)
            if g_prev2 is not None:
                dip = pend[m] & ~direct & (g_prev < g_prev2) & (g_prev <= g_new)
            else:
                dip = None
            if direct.any():
                for r in np.flatnonzero(direct):
                    tau = _refine(f, x_prev[r], h, region, thr, step)
                    out[m][idx[r]] = t + (h if tau is None else tau)
                pend[m] = pend[m] & ~direct
                changed = True
            if dip is not None and dip.any():
                for r in np.flatnonzero(dip):
                    tau = _refine(f, x_prev2[r], h_prev + h, region, thr, step)
                    if tau is not None:
                        out[m][idx[r]] = t - h_prev + tau
                        pend[m][r] = False
                        changed = True
        x_prev2, g_prev2 = x_prev, g_prev
        x_prev, g_prev = x_new, g_new
        if changed:
            keep = np.zeros(idx.size, dtype=bool)
            for m in modes:
                keep |= pend[m]
            if not keep.all():
                idx, x_prev, g_prev = idx[keep], x_prev[keep], g_prev[keep]
                x_prev2, g_prev2 = x_prev2[keep], g_prev2[keep]
                pend = {m: pend[m][keep] for m in modes}
        h_prev = h
        t = t_next
        k += 1
    return out


def hitting_time(field: VectorField, x, region: ConvexRegion, direction: str = FORWARD,
                 mode: str = OPEN, t_max: float = 100.0, step: float = 1e-3,
                 working_box=None) -> Optional[float]:
    """Smallest ``t`` in ``[0, t_max]`` with the (signed) flow of ``x`` in the region.

    Returns None when the trajectory does not enter within ``t_max``.
    """
    res = entry_times(field, np.asarray(x, dtype=float)[None, :], region, direction,
                      (mode,), t_max, step, working_box)[mode][0]
    return None if np.isnan(res) else float(res)


def configuration_hitting_times(field: VectorField, config0, config1, region: ConvexRegion,
                                params: Optional[Params] = None) -> HittingTimes:
    params = resolve(params)
    box = params.box_arrays()
    jobs = [(config0, FORWARD), (config1, BACKWARD)]
    fwd, bwd = map_tasks(lambda job: entry_times(field, job[0], region, job[1], (OPEN, CLOSURE),
                                                 params.t_max, params.step, box), jobs)
    return HittingTimes(fwd[OPEN], fwd[CLOSURE], bwd[OPEN], bwd[CLOSURE], params.t_max)
