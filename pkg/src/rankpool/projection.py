"""Supervised projection fitting.

The projection is a d x c matrix ``a`` applied on the right (projected =
data @ a). The fit minimizes

    trace(a' S_w a) / trace(a' S_b a) + lambda_reg * ||I_c - a' a||_F

starting from the generalized-eigen initializer and descending with a
backtracking (step-halving) full-batch gradient method, so the recorded
objective trace is monotone non-increasing by construction.

The analytic gradient below is the gradient of this exact expression; the
finite-difference suite in tests/gradcheck is the authority that keeps it
honest.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProjectionError, DimensionError
from .linalg import LabeledMatrix, compute_scatters, generalized_eigen
from .tensor import as_matrix

DEGENERATE_TRACE_TOL = 1e-12
MIN_STEP = 1e-14


@dataclass
class FitConfig:
    lambda_reg: float = 1.0
    learning_rate: float = 1e-3
    max_iters: int = 500
    grad_tol: float = 1e-6
    fd_check: bool = False

    def validate(self):
        if min(self.lambda_reg, self.learning_rate, self.grad_tol) < 0:
            raise ValueError("fit config values must be nonnegative")
        if self.learning_rate == 0 or self.grad_tol == 0:
            raise ValueError("learning_rate and grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class FitMeta:
    iterations: int = 0
    final_objective: float = np.inf
    final_orth_residual: float = np.inf
    objective_trace: list = field(default_factory=list)


@dataclass
class Projection:
    """Fitted d x c projection plus the settings it was fitted with."""

    a: np.ndarray
    lambda_reg: float
    fit_meta: FitMeta

    @property
    def input_dim(self):
        return self.a.shape[0]

    @property
    def class_count(self):
        return self.a.shape[1]


def _traces(a, pair):
    num = float(np.trace(a.T @ pair.s_w @ a))
    den = float(np.trace(a.T @ pair.s_b @ a))
    if den < DEGENERATE_TRACE_TOL:
        raise DegenerateProjectionError(
            "projected between-class trace is ~0; no class separation to normalize by"
        )
    return num, den


def _orth_residual(a):
    c = a.shape[1]
    return float(np.linalg.norm(np.eye(c) - a.T @ a, "fro"))


def objective(a, pair, lambda_reg):
    """Scatter-trace ratio plus orthogonality penalty at projection ``a``."""
    a = as_matrix(a)
    num, den = _traces(a, pair)
    return num / den + lambda_reg * _orth_residual(a)


def gradient(a, pair, lambda_reg):
    """Gradient of ``objective`` w.r.t. every entry of ``a`` (same d x c layout).

    The penalty term ||I - a'a||_F is non-differentiable exactly at zero
    residual; the zero matrix is used there (valid subgradient).
    """
    a = as_matrix(a)
    num, den = _traces(a, pair)
    ratio = num / den
    grad = (2.0 / den) * (pair.s_w @ a - ratio * (pair.s_b @ a))
    resid = _orth_residual(a)
    if lambda_reg != 0.0 and resid > 0.0:
        grad -= (2.0 * lambda_reg / resid) * (a @ (np.eye(a.shape[1]) - a.T @ a))
    return grad


def fit_projection(data, config=None):
    """Fit the supervised projection on labeled rows.

    Initializes from the top-c generalized eigenvectors of the scatter pair
    (unit-norm columns), then runs step-halving gradient descent. Stops when
    the gradient Frobenius norm drops below grad_tol, the step collapses, or
    max_iters is reached.
    """
    config = config or FitConfig()
    config.validate()
    if not isinstance(data, LabeledMatrix):
        data = LabeledMatrix(*data)
    c = data.class_count
    d = data.matrix.shape[1]
    if d < c:
        warnings.warn(
            f"fitting a projection with d={d} < c={c}; separability will be limited",
            stacklevel=2,
        )
    pair = compute_scatters(data)
    a = generalized_eigen(pair, k=min(c, d)).vectors
    if a.shape[1] < c:
        # d < c: pad with zero columns so projected width still equals c.
        a = np.hstack([a, np.zeros((d, c - a.shape[1]))])

    obj = objective(a, pair, config.lambda_reg)
    obj_trace = [obj]
    iterations = 0
    step = config.learning_rate
    for _ in range(config.max_iters):
        grad = gradient(a, pair, config.lambda_reg)
        if np.linalg.norm(grad, "fro") <= config.grad_tol:
            break
        accepted = False
        while step >= MIN_STEP:
            trial = a - step * grad
            try:
                trial_obj = objective(trial, pair, config.lambda_reg)
            except DegenerateProjectionError:
                trial_obj = np.inf
            if trial_obj <= obj:
                a, obj = trial, trial_obj
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        iterations += 1
        obj_trace.append(obj)
        step = min(config.learning_rate, step * 2.0)

    if config.fd_check:
        _fd_spot_check(a, pair, config.lambda_reg)

    meta = FitMeta(
        iterations=iterations,
        final_objective=obj,
        final_orth_residual=_orth_residual(a),
        objective_trace=obj_trace,
    )
    return Projection(a=a, lambda_reg=config.lambda_reg, fit_meta=meta)


def _fd_spot_check(a, pair, lambda_reg, step=1e-6, tol=1e-3):
    """Cheap central-difference sanity check of a few gradient entries."""
    grad = gradient(a, pair, lambda_reg)
    rng = np.random.default_rng(0)
    flat = rng.choice(a.size, size=min(5, a.size), replace=False)
    for k in flat:
        probe = a.copy().reshape(-1)
        probe[k] += step
        hi = objective(probe.reshape(a.shape), pair, lambda_reg)
        probe[k] -= 2 * step
        lo = objective(probe.reshape(a.shape), pair, lambda_reg)
        fd = (hi - lo) / (2 * step)
        an = grad.reshape(-1)[k]
        if abs(fd - an) > tol * max(1.0, abs(fd)):
            raise FloatingPointError(
                f"analytic/finite-difference gradient mismatch at entry {k}: {an} vs {fd}"
            )


def project(data, proj):
    """Apply a fitted projection: rows x d -> rows x c."""
    data = as_matrix(data)
    a = proj.a if isinstance(proj, Projection) else as_matrix(proj)
    if data.shape[1] != a.shape[0]:
        raise DimensionError(
            f"data has {data.shape[1]} columns but projection expects {a.shape[0]}"
        )
    return data @ a
