"""scikit-learn style facade over the steering pipeline.

``fit(X0, X1)`` computes the infimum time and synthesizes a plan; ``predict``
runs the closed loop; ``score`` is the negated matching distance to the target.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .control import simulate
from .flow import ConvexRegion, VectorField
from .mintime import APPROX, EXACT, configuration_distance
from .params import Params
from .pipeline import plan as run_planner
from .validation import check_configuration, check_pair


class CrowdSteeringController(BaseEstimator):
    """Steer a configuration ``X0`` onto ``X1`` through a convex control region.

    Parameters
    ----------
    field : VectorField
        Uncontrolled velocity field.
    region : ConvexRegion
        Control region; the control acts only inside it.
    mode : {"exact", "approximate"}
        Exact steering uses open-set hitting times; approximate steering also
        handles targets whose backward trajectory only grazes the region.
    horizon : float, optional
        Final time. Defaults to the infimum time plus ``delta``.
    delta, epsilon, step, t_max : float
        Numerical parameters, see :class:`crowdctl.params.Params`.

    Attributes
    ----------
    minimal_time_ : float
        Infimum time of the chosen mode.
    actuation_threshold_ : float
        Largest individual hitting time.
    report_ : MinimalTimeReport
    plan_ : ControlPlan
    horizon_ : float
    """

    def __init__(self, field: Optional[VectorField] = None, region: Optional[ConvexRegion] = None,
                 mode: str = EXACT, horizon: Optional[float] = None, delta: float = 0.1,
                 epsilon: float = 1e-2, step: float = 1e-3, t_max: float = 100.0):
        self.field = field
        self.region = region
        self.mode = mode
        self.horizon = horizon
        self.delta = delta
        self.epsilon = epsilon
        self.step = step
        self.t_max = t_max

    def _params(self) -> Params:
        return Params(step=self.step, t_max=self.t_max, delta=self.delta, epsilon=self.epsilon,
                      interior_margin=self.region.interior_margin,
                      boundary_tol=self.region.boundary_tol)

    def fit(self, X, y):
        """Plan the steering of configuration ``X`` onto configuration ``y``."""
        if self.field is None or self.region is None:
            raise ValueError("field and region must be set before fit")
        if self.mode not in (EXACT, APPROX, "approx"):
            raise ValueError(f"unknown mode {self.mode!r}")
        X0, X1 = check_pair(X, y)
        outcome = run_planner(self.field, X0, X1, self.region, self._params(), self.mode,
                              self.horizon, self.epsilon)
        self.report_ = outcome.report
        self.minimal_time_ = outcome.report.infimum_time
        self.actuation_threshold_ = outcome.report.actuation_threshold
        self.plan_ = outcome.plan
        self.horizon_ = outcome.plan.horizon
        self.n_features_in_ = X0.shape[1]
        self.initial_ = X0
        self.target_ = X1
        return self

    def predict(self, X=None) -> np.ndarray:
        """Closed-loop state at the horizon, starting from ``X`` (default: fitted ``X0``)."""
        check_is_fitted(self, "plan_")
        X = self.initial_ if X is None else check_configuration(X, "X", self.n_features_in_)
        params = self._params()
        result = simulate(self.plan_, X, self.field, self.region, params.step,
                          params.output_stride, target=self.target_)
        return result.final

    def score(self, X, y) -> float:
        """Negative matching distance between the steered ``X`` and ``y``."""
        final = self.predict(X)
        return -configuration_distance(final, check_configuration(y, "y")).value
