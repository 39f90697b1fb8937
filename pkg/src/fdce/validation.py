"""Input validation helpers.

Arrays are coerced to float64/complex128 views where possible; validation
only copies when the dtype actually changes.  These helpers sit at the
public API boundary (estimator classes, file I/O, type constructors); inner
numerical kernels assume validated inputs.
"""

from __future__ import annotations

import numpy as np

from .exceptions import InvalidDimensionError


def as_complex_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 1:
        raise InvalidDimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDimensionError(f"{name} contains non-finite entries")
    return arr


def as_complex_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim != 2:
        raise InvalidDimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDimensionError(f"{name} contains non-finite entries")
    return arr


def as_real_vector(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidDimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidDimensionError(f"{name} contains non-finite entries")
    return arr


def check_length(v: np.ndarray, n: int, name: str = "vector") -> np.ndarray:
    if v.shape[-1] != n:
        raise InvalidDimensionError(
            f"{name} has length {v.shape[-1]}, expected {n}"
        )
    return v


def as_batch(a, n: int, name: str = "Y") -> np.ndarray:
    """Coerce a single vector or a stack of row vectors to shape (m, n)."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise InvalidDimensionError(
            f"{name} must have shape (m, {n}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidDimensionError(f"{name} contains non-finite entries")
    return arr
