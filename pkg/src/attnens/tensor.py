"""Dense n-dimensional arrays and the arithmetic primitives built on them.

Every value in this library is a plain ``numpy.ndarray`` in row-major order
carrying one of two precisions: ``single`` (float32) for training and
inference, ``double`` (float64) for finite-difference verification.  Image
batches use N-C-H-W axis order throughout.

The helpers here combine arrays under stricter rules than raw numpy: shapes
must match exactly (no broadcasting), mixing precisions is an error, and no
operation mutates its inputs.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .errors import PrecisionError, ShapeError

SINGLE = "single"
DOUBLE = "double"

_DTYPES = {SINGLE: np.float32, DOUBLE: np.float64}
_PRECISIONS = {np.dtype(np.float32): SINGLE, np.dtype(np.float64): DOUBLE}


def dtype_of(precision: str) -> np.dtype:
    """Map a precision name to its numpy dtype."""
    try:
        return np.dtype(_DTYPES[precision])
    except KeyError:
        raise PrecisionError(f"unknown precision {precision!r}") from None


def precision_of(t: np.ndarray) -> str:
    """Return 'single' or 'double' for a tensor, rejecting other dtypes."""
    try:
        return _PRECISIONS[t.dtype]
    except KeyError:
        raise PrecisionError(f"unsupported dtype {t.dtype}") from None


def _validate_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in shape)
    if len(dims) == 0:
        raise ShapeError("shape must have at least one dimension")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    return dims


def _validate_pair(a: np.ndarray, b: np.ndarray) -> None:
    if precision_of(a) != precision_of(b):
        raise PrecisionError(f"mixed precisions {a.dtype} and {b.dtype}")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def new(shape: Sequence[int], fill: float = 0.0, precision: str = SINGLE) -> np.ndarray:
    """Allocate a tensor of the given shape filled with a constant."""
    return np.full(_validate_shape(shape), fill, dtype=dtype_of(precision))


def identity(n: int, precision: str = SINGLE) -> np.ndarray:
    if n < 1:
        raise ShapeError(f"identity size must be >= 1, got {n}")
    return np.eye(n, dtype=dtype_of(precision))


def asarray(values, precision: str = SINGLE) -> np.ndarray:
    """Build a tensor from nested sequences, validating the resulting shape."""
    arr = np.asarray(values, dtype=dtype_of(precision))
    _validate_shape(arr.shape if arr.ndim else (0,))
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Rank-2 matrix product with explicit shape and precision checks."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if precision_of(a) != precision_of(b):
        raise PrecisionError(f"mixed precisions {a.dtype} and {b.dtype}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} vs {b.shape}")
    return a @ b


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _validate_pair(a, b)
    return a + b


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise (Hadamard) product of same-shape tensors."""
    _validate_pair(a, b)
    return a * b


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * a.dtype.type(s)


def elementwise(fn: Callable[[np.ndarray], np.ndarray], a: np.ndarray) -> np.ndarray:
    """Apply a unary function elementwise, preserving shape and precision."""
    out = np.asarray(fn(a), dtype=a.dtype)
    if out.shape != a.shape:
        raise ShapeError(f"elementwise fn changed shape {a.shape} -> {out.shape}")
    return out


def reshape(a: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Return a new tensor with the same elements in a new shape."""
    dims = _validate_shape(shape)
    if int(np.prod(dims)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} elements) to {dims}")
    return a.reshape(dims).copy()
