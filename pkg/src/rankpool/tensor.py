"""Dense 2-D / 4-D array plumbing.

Matrices are float64 ndarrays of shape (rows, cols). Activation stacks are
float64 ndarrays of shape (n, h, w, d): n frames of h x w pixels with d
channels. All ops are pure functions; nothing here owns state.

The flattening order is the load-bearing contract: ``flatten_stack`` lists
pixels frame-major, then row-major within a frame, and ``unflatten_scores``
is its exact inverse on per-pixel scalars.
"""

import numpy as np

from .errors import DimensionError, NumericError


def as_matrix(x):
    """Coerce to a float64 2-D array, validating finiteness."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains non-finite values")
    return m


def as_stack(x):
    """Coerce to a float64 activation stack (n, h, w, d), validating finiteness."""
    s = np.ascontiguousarray(x, dtype=np.float64)
    if s.ndim != 4:
        raise DimensionError(f"expected 4-D stack (n,h,w,d), got ndim={s.ndim}")
    if min(s.shape) < 1:
        raise DimensionError(f"stack dims must all be >= 1, got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericError("stack contains non-finite values")
    return s


def flatten_stack(stack):
    """Reshape an (n, h, w, d) stack into an (n*h*w, d) matrix.

    Row k corresponds to frame k // (h*w) and, within the frame, to spatial
    position (row-major) k % (h*w). Channel values become the d columns.
    """
    stack = as_stack(stack)
    n, h, w, d = stack.shape
    return stack.reshape(n * h * w, d)


def unflatten_scores(scores, dims):
    """Inverse of ``flatten_stack`` for per-pixel scalars.

    Takes a length n*h*w vector of scores and returns an (n, h, w) array of
    per-frame score maps, undoing the frame-major / row-major ordering.
    """
    n, h, w = dims
    scores = np.ascontiguousarray(scores, dtype=np.float64).reshape(-1)
    if scores.size != n * h * w:
        raise DimensionError(
            f"got {scores.size} scores for dims {dims} (need {n * h * w})"
        )
    return scores.reshape(n, h, w)


def matmul(a, b):
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape} incompatible")
    return a @ b


def transpose(a):
    return as_matrix(a).T.copy()


def trace(a):
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"trace requires a square matrix, got {a.shape}")
    return float(np.trace(a))


def frobenius_norm(a):
    return float(np.linalg.norm(as_matrix(a), "fro"))


def identity(n):
    if n < 1:
        raise DimensionError("identity size must be >= 1")
    return np.eye(n, dtype=np.float64)
