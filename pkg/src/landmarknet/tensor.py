"""4D tensor helpers.

A ``Tensor4`` is a C-contiguous float64 ``numpy.ndarray`` of shape
``(n, c, h, w)``. Element ``(i, j, k, l)`` lives at flat offset
``((i*c + j)*h + k)*w + l``.
"""

import numpy as np

from .errors import InvalidShapeError, ShapeError

# Largest element count we allow a single tensor to hold.
MAX_ELEMENTS = np.iinfo(np.int64).max // 8


def _check_dims(dims):
    total = 1
    for d in dims:
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise InvalidShapeError(f"dimensions must be positive integers, got {tuple(dims)}")
        total *= int(d)
        if total > MAX_ELEMENTS:
            raise InvalidShapeError(f"dimension product overflows: {tuple(dims)}")
    return total


def tensor_new(n, c, h, w, fill=0.0):
    """Allocate an ``(n, c, h, w)`` float64 tensor filled with ``fill``."""
    _check_dims((n, c, h, w))
    return np.full((int(n), int(c), int(h), int(w)), float(fill), dtype=np.float64)


def offset(shape, i, j, k, l):
    """Row-major flat offset of index ``(i, j, k, l)`` in a tensor of ``shape``."""
    n, c, h, w = shape
    for idx, dim in zip((i, j, k, l), shape):
        if not 0 <= idx < dim:
            raise IndexError(f"index {(i, j, k, l)} out of range for shape {tuple(shape)}")
    return ((i * c + j) * h + k) * w + l


def tensor_get(t, i, j, k, l):
    return float(t.flat[offset(t.shape, i, j, k, l)])


def tensor_set(t, i, j, k, l, value):
    t.flat[offset(t.shape, i, j, k, l)] = value


def as_tensor4(x):
    """Validate and coerce ``x`` to a contiguous float64 4D array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 4:
        raise ShapeError(f"expected a 4D (n, c, h, w) array, got shape {arr.shape}")
    _check_dims(arr.shape)
    return arr
