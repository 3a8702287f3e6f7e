"""Input validation helpers shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .exceptions import DimensionError
from .polymap import PolyMap


def check_polymap(X) -> PolyMap:
    if not isinstance(X, PolyMap):
        raise TypeError(
            f"expected a PolyMap (see polymap_from_terms), got {type(X).__name__}"
        )
    return X


def check_points(X, m: int) -> np.ndarray:
    """2-D float array of points with ``m`` columns; a single point is promoted."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    X = check_array(X, dtype=float)
    if X.shape[1] != m:
        raise DimensionError(f"X has {X.shape[1]} features, expected {m}")
    return X


def check_tensor(T, min_order: int = 3) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if T.ndim < min_order:
        raise DimensionError(f"expected a tensor of order >= {min_order}, got {T.ndim}")
    if not np.all(np.isfinite(T)):
        raise ValueError("tensor contains NaN or infinity")
    return T
