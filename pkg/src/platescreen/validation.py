"""Input validation helpers used by the image and estimator APIs."""

import numpy as np

from .errors import DimensionError


def check_image_2d(img, name="img"):
    """Coerce to a 2-D float64 array, rejecting anything else."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    return arr.astype(np.float64, copy=False)


def check_same_shape(a, b, names=("a", "b")):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(
            f"{names[0]} and {names[1]} differ in shape: {a.shape} vs {b.shape}"
        )
    return a, b


def check_matrix(X, name="X"):
    """Coerce to a 2-D float64 feature matrix with finite entries."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_labels(y, n_samples, name="y"):
    arr = np.asarray(y)
    if arr.ndim != 1 or arr.shape[0] != n_samples:
        raise ValueError(
            f"{name} must be 1-D with {n_samples} entries, got shape {arr.shape}"
        )
    return arr
