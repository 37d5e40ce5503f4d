"""Input checks for the estimator facade, built on scikit-learn's validators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import SizeMismatch
from .flow import min_pairwise_distance


def check_configuration(points, name: str = "configuration", dimension=None) -> np.ndarray:
    """Return ``points`` as a finite ``(n, d)`` float array of distinct points."""
    arr = check_array(points, dtype=np.float64, ensure_2d=True, ensure_all_finite=True,
                      input_name=name)
    if dimension is not None and arr.shape[1] != dimension:
        raise ValueError(f"{name} has dimension {arr.shape[1]}, expected {dimension}")
    if min_pairwise_distance(arr) <= 0:
        raise ValueError(f"{name}: configuration not disjoint")
    return arr


def check_pair(X0, X1):
    a = check_configuration(X0, "X0")
    b = check_configuration(X1, "X1", dimension=a.shape[1])
    if len(a) != len(b):
        raise SizeMismatch(f"configurations have different sizes ({len(a)} vs {len(b)})")
    return a, b
