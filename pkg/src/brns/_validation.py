"""Input validation helpers shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_array


def check_behaviors(X, n_features=None, allow_empty=False, name="X"):
    """Return ``X`` as a finite float64 ``(n, d)`` array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        if not allow_empty:
            raise ValueError(f"{name} is empty")
        return X.reshape(0, X.shape[1] if X.ndim == 2 else (n_features or 0))
    X = check_array(X, dtype=np.float64, ensure_all_finite=True, input_name=name)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, expected {n_features}")
    return X


def check_bounds(bounds, n_features):
    """Return finite ``(d, 2)`` lo/hi bounds; raise on unbounded or malformed input."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1 and b.shape == (2,):
        b = np.tile(b, (n_features, 1))
    if b.shape != (n_features, 2):
        raise ValueError(f"bounds must have shape ({n_features}, 2), got {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValueError("behavior space must be bounded for uniform sampling")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("each bound needs lo < hi")
    return b
