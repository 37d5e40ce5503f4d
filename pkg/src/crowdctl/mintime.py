"""Infimum times for exact and approximate steering of an indistinguishable crowd.

The infimum time pairs the forward entry times sorted increasingly with the
backward entry times sorted decreasingly and takes the largest pair sum. The
exhaustive min-max over all permutations is kept as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Optional

import numpy as np

from .exceptions import SizeMismatch, TooLargeN
from .flow import ConvexRegion, HittingTimes, VectorField, configuration_hitting_times
from .params import Params

EXACT = "exact"
APPROX = "approximate"

BRUTE_FORCE_MAX_N = 10


@dataclass
class MinimalTimeReport:
    mode: str
    infimum_time: Optional[float]
    actuation_threshold: Optional[float]
    pairing: Optional[np.ndarray]
    forward_times_sorted: np.ndarray
    backward_times_sorted: np.ndarray
    feasible: bool
    hitting: Optional[HittingTimes] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def enc(a):
            return [None if np.isnan(v) else float(v) for v in a]
        return {
            "mode": self.mode,
            "infimum_time": self.infimum_time,
            "actuation_threshold": self.actuation_threshold,
            "pairing": None if self.pairing is None else [int(j) for j in self.pairing],
            "forward_times_sorted": enc(self.forward_times_sorted),
            "backward_times_sorted": enc(self.backward_times_sorted),
            "feasible": self.feasible,
            "hitting": None if self.hitting is None else self.hitting.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MinimalTimeReport":
        def dec(a):
            return np.array([np.nan if v is None else v for v in a], dtype=float)
        return cls(
            mode=data["mode"],
            infimum_time=data["infimum_time"],
            actuation_threshold=data["actuation_threshold"],
            pairing=None if data["pairing"] is None else np.array(data["pairing"], dtype=int),
            forward_times_sorted=dec(data["forward_times_sorted"]),
            backward_times_sorted=dec(data["backward_times_sorted"]),
            feasible=data["feasible"],
            hitting=None if data.get("hitting") is None else HittingTimes.from_dict(data["hitting"]),
        )


@dataclass
class ConfigDistance:
    value: float
    matching: np.ndarray


@dataclass
class GeometricReport:
    """Agents whose free trajectory never reaches the region within the horizon."""

    forward_blocked: list
    backward_blocked: list
    horizon: float

    @property
    def feasible(self) -> bool:
        return not self.forward_blocked and not self.backward_blocked

    def describe(self) -> str:
        lines = []
        for i in self.forward_blocked:
            lines.append(f"agent {i}: forward trajectory from the initial point never "
                         f"enters the control region within t_max={self.horizon:g}")
        for i in self.backward_blocked:
            lines.append(f"agent {i}: backward trajectory from the target point never "
                         f"enters the control region within t_max={self.horizon:g}")
        return "\n".join(lines)


def _check_sizes(a, b):
    if len(a) != len(b):
        raise SizeMismatch(f"configurations have different sizes ({len(a)} vs {len(b)})")


def sorted_pairing(forward_times, backward_times):
    """Min-max pairing of forward and backward times by opposite sorting.

    Returns ``(value, sigma, fwd_sorted, bwd_sorted)`` where ``sigma[i]`` is the
    backward index paired with forward index ``i``. Ties keep the original order.
    """
    f = np.asarray(forward_times, dtype=float)
    b = np.asarray(backward_times, dtype=float)
    _check_sizes(f, b)
    fwd_order = np.argsort(f, kind="stable")
    bwd_order = np.argsort(-b, kind="stable")
    sigma = np.empty(len(f), dtype=int)
    sigma[fwd_order] = bwd_order
    fs, bs = f[fwd_order], b[bwd_order]
    return float(np.max(fs + bs)), sigma, fs, bs


@lru_cache(maxsize=None)
def _all_permutations(n: int) -> np.ndarray:
    perms = np.array(list(permutations(range(n))), dtype=np.int8)
    perms.setflags(write=False)
    return perms


def brute_force_minimal_time(forward_times, backward_times):
    """Exhaustive ``min over sigma of max_i (f_i + b_sigma(i))``.

    The lexicographically smallest optimal permutation is returned.
    """
    f = np.asarray(forward_times, dtype=float)
    b = np.asarray(backward_times, dtype=float)
    _check_sizes(f, b)
    n = len(f)
    if n > BRUTE_FORCE_MAX_N:
        raise TooLargeN(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}")
    if n == 0:
        raise ValueError("need at least one agent")
    perms = _all_permutations(n)
    values = np.max(f[None, :] + b[perms], axis=1)
    best = int(np.argmin(values))
    return float(values[best]), perms[best].astype(int)


def _report(mode, forward, backward, hitting) -> MinimalTimeReport:
    if np.any(np.isnan(forward)) or np.any(np.isnan(backward)):
        return MinimalTimeReport(mode, None, None, None, np.sort(forward),
                                 -np.sort(-backward), False, hitting)
    value, sigma, fs, bs = sorted_pairing(forward, backward)
    threshold = float(max(np.max(forward), np.max(backward)))
    return MinimalTimeReport(mode, value, threshold, sigma, fs, bs, True, hitting)


def minimal_time_from_hitting(hitting: HittingTimes, mode: str = EXACT) -> MinimalTimeReport:
    """Exact mode pairs open-set entry times; approximate mode uses closure
    entry times backward."""
    if mode == EXACT:
        return _report(EXACT, hitting.t0, hitting.t1, hitting)
    if mode == APPROX:
        return _report(APPROX, hitting.t0, hitting.t1_bar, hitting)
    raise ValueError(f"unknown mode {mode!r}")


def exact_minimal_time(field: VectorField, config0, config1, region: ConvexRegion,
                       params: Optional[Params] = None,
                       hitting: Optional[HittingTimes] = None) -> MinimalTimeReport:
    _check_sizes(config0, config1)
    if hitting is None:
        hitting = configuration_hitting_times(field, config0, config1, region, params)
    return minimal_time_from_hitting(hitting, EXACT)


def approx_minimal_time(field: VectorField, config0, config1, region: ConvexRegion,
                        params: Optional[Params] = None,
                        hitting: Optional[HittingTimes] = None) -> MinimalTimeReport:
    _check_sizes(config0, config1)
    if hitting is None:
        hitting = configuration_hitting_times(field, config0, config1, region, params)
    return minimal_time_from_hitting(hitting, APPROX)


def check_geometric_condition(field: VectorField, config0, config1, region: ConvexRegion,
                              params: Optional[Params] = None,
                              hitting: Optional[HittingTimes] = None) -> GeometricReport:
    if hitting is None:
        hitting = configuration_hitting_times(field, config0, config1, region, params)
    fwd = [int(i) for i in np.flatnonzero(np.isnan(hitting.t0))]
    bwd = [int(i) for i in np.flatnonzero(np.isnan(hitting.t1))]
    return GeometricReport(fwd, bwd, hitting.horizon)


def configuration_distance(config0, config1) -> ConfigDistance:
    """Mean Euclidean cost of the best matching between two configurations."""
    from .transport import hungarian

    a = np.atleast_2d(np.asarray(config0, dtype=float))
    b = np.atleast_2d(np.asarray(config1, dtype=float))
    _check_sizes(a, b)
    cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    perm, total = hungarian(cost)
    return ConfigDistance(total / len(a), perm)


__all__ = [
    "EXACT", "APPROX", "MinimalTimeReport", "ConfigDistance", "GeometricReport",
    "sorted_pairing", "brute_force_minimal_time", "minimal_time_from_hitting",
    "exact_minimal_time", "approx_minimal_time", "check_geometric_condition",
    "configuration_distance",
]
