from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class Params:
    """Numerical knobs shared by the whole pipeline.

    All quantities are in dimensionless model units.
    """

    step: float = 1e-3
    t_max: float = 100.0
    delta: float = 0.1
    epsilon: float = 1e-2
    working_box: Optional[tuple[tuple[float, ...], tuple[float, ...]]] = None
    interior_margin: float = 1e-7
    boundary_tol: float = 1e-9
    output_stride: int = 10
    seed: int = 0
    radius_samples: int = 512

    def __post_init__(self):
        for name in ("step", "t_max", "delta", "epsilon", "interior_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"parameter {name!r} must be positive")
        if self.boundary_tol < 0:
            raise ValueError("parameter 'boundary_tol' must be non-negative")
        if self.output_stride < 1 or self.radius_samples < 2:
            raise ValueError("'output_stride' must be >= 1 and 'radius_samples' >= 2")
        if self.working_box is not None:
            lo, hi = (tuple(float(v) for v in b) for b in self.working_box)
            if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
                raise ValueError("working_box must be (lower, upper) with lower < upper")
            object.__setattr__(self, "working_box", (lo, hi))

    def box_arrays(self):
        if self.working_box is None:
            return None
        return np.asarray(self.working_box[0]), np.asarray(self.working_box[1])

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.working_box is not None:
            out["working_box"] = [list(self.working_box[0]), list(self.working_box[1])]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Params":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if kwargs.get("working_box") is not None:
            kwargs["working_box"] = tuple(tuple(b) for b in kwargs["working_box"])
        return cls(**kwargs)


DEFAULT_PARAMS = Params()


def resolve(params: Optional[Params]) -> Params:
    return DEFAULT_PARAMS if params is None else params
