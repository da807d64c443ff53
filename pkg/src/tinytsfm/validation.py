"""Input validation helpers used at the public API boundaries."""

import numpy as np

from .errors import ShapeError


def as_f32(x, name="array"):
    """Coerce to a float32 ndarray, rejecting non-numeric input."""
    try:
        arr = np.asarray(x, dtype=np.float32)
    except (TypeError, ValueError) as exc:
        raise ShapeError(f"{name} is not numeric: {exc}") from None
    return arr


def check_1d(x, name="array"):
    """Coerce to a 1-D float32 vector."""
    arr = as_f32(x, name)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def check_2d(x, name="array"):
    """Coerce to a 2-D float32 matrix; a 1-D vector becomes a single row."""
    arr = as_f32(x, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def check_same_length(a, b, name_a="a", name_b="b"):
    if len(a) != len(b):
        raise ShapeError(
            f"{name_a} and {name_b} must have equal length, got {len(a)} vs {len(b)}"
        )


def check_binary(x, name="labels"):
    """Coerce to an int 0/1 vector."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise ShapeError(f"{name} must be binary (0/1), got values {vals[:8]}")
    return arr.astype(np.int64)


def check_ratio(r, name="ratio"):
    r = float(r)
    if not 0.0 < r < 1.0:
        raise ShapeError(f"{name} must lie strictly inside (0, 1), got {r}")
    return r
