"""Input validation helpers shared by the estimators and the functional core."""

import numpy as np


class DataError(ValueError):
    """Malformed input data, such as a bad manifest or feature file."""


class ShapeError(ValueError):
    pass


def check_features(X, m=None, name="X") -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array with at least one row and column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D (T, m), got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"{name} must have T >= 1 and m >= 1, got {X.shape}")
    if m is not None and X.shape[1] != m:
        raise ShapeError(f"{name} has {X.shape[1]} features, expected {m}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X


def check_vector(v, n=None, name="vector") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ShapeError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def check_label_matrix(Y, n_samples, n_classes=None) -> np.ndarray:
    """Multi-label indicator matrix of 0/1 values, shape (n_samples, C)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != n_samples:
        raise ShapeError(f"labels must have shape ({n_samples}, C), got {Y.shape}")
    if n_classes is not None and Y.shape[1] != n_classes:
        raise ShapeError(f"labels have {Y.shape[1]} classes, expected {n_classes}")
    if not np.all((Y == 0) | (Y == 1)):
        raise DataError("labels must be a 0/1 indicator matrix")
    return Y


def check_feature_list(Xs, m=None, name="X") -> list:
    if isinstance(Xs, np.ndarray) and Xs.ndim == 2:
        Xs = [Xs]
    Xs = [check_features(X, m, f"{name}[{i}]") for i, X in enumerate(Xs)]
    if not Xs:
        raise ShapeError(f"{name} is empty")
    if m is None:
        dims = {X.shape[1] for X in Xs}
        if len(dims) != 1:
            raise ShapeError(f"{name} mixes feature dimensions {sorted(dims)}")
    return Xs
