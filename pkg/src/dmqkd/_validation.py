"""Small input-validation helpers used across modules."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import InvalidParameterError


def check_real(value, name, *, low=None, high=None, low_inclusive=True, high_inclusive=True):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise InvalidParameterError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value}")
    if low is not None:
        bad = value < low if low_inclusive else value <= low
        if bad:
            op = ">=" if low_inclusive else ">"
            raise InvalidParameterError(f"{name} must be {op} {low}, got {value}")
    if high is not None:
        bad = value > high if high_inclusive else value >= high
        if bad:
            op = "<=" if high_inclusive else "<"
            raise InvalidParameterError(f"{name} must be {op} {high}, got {value}")
    return value


def check_int(value, name, *, low=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise InvalidParameterError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if low is not None and value < low:
        raise InvalidParameterError(f"{name} must be >= {low}, got {value}")
    return value


def check_complex_1d(x, name="x"):
    """Return ``x`` as a finite 1-D complex128 array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    arr = arr.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


def check_quadratures(x, name="x", *, min_samples=1):
    """Return ``x`` as a finite ``(n, 2)`` float array of (x, p) pairs.

    Complex 1-D input is split into real and imaginary parts.
    """
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        if arr.ndim != 1:
            raise InvalidParameterError(f"complex {name} must be one-dimensional")
        arr = np.column_stack([arr.real, arr.imag])
    arr = check_array(arr, dtype=np.float64, ensure_min_samples=min_samples,
                      input_name=name)
    if arr.shape[1] != 2:
        raise InvalidParameterError(f"{name} must have two columns (x, p), got {arr.shape[1]}")
    return arr


def as_rng(seed):
    """Turn ``None``, an int, a SeedSequence or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
