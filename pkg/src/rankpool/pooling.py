"""Pooling operators with forward selection state and gradient routing.

All strategies use non-overlapping windows (stride equals window, input
spatial dims divisible by it) and record enough forward state to route
gradients back:

  max          per-channel argmax switch per window
  average      uniform weights (nothing stored; backward spreads 1/(ph*pw))
  stochastic   train: per-channel sampled switch, location probability
               proportional to the rectified activation (uniform when the
               window sum is 0); test: probability-weighted average
  multipartite one spatial switch per window, shared by all channels,
               chosen as the argmax of a per-pixel score map

Ties break to the first window slot in row-major scan order. Window slots
are flat indices di * pw + dj.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import DimensionError
from .ranking import rank_instances
from .tensor import as_stack, flatten_stack, unflatten_scores

STRATEGIES = ("max", "average", "stochastic", "multipartite")


@dataclass(frozen=True)
class PoolSpec:
    window: tuple = (2, 2)
    stride: tuple = None
    strategy: str = "max"

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.window)
        ph, pw = self.window
        sh, sw = self.stride
        if min(ph, pw, sh, sw) < 1:
            raise DimensionError("pool window/stride must be >= 1")
        if (sh, sw) != (ph, pw):
            raise DimensionError("only stride == window pooling is supported")
        if self.strategy not in STRATEGIES:
            raise DimensionError(f"unknown pooling strategy {self.strategy!r}")


@dataclass
class PoolForward:
    """Forward result plus the selection state the backward pass needs."""

    output: np.ndarray
    strategy: str
    window: tuple
    input_shape: tuple
    switches: np.ndarray = None
    train_mode: bool = True
    pooled_input: np.ndarray = None  # retained only for stochastic test backward


def _checked(stack, spec):
    x = as_stack(stack)
    ph, pw = spec.window
    n, h, w, d = x.shape
    if h % ph or w % pw:
        raise DimensionError(
            f"input {h}x{w} not divisible by pooling window {ph}x{pw}"
        )
    return x, ph, pw


def _window_view(x, ph, pw):
    n, h, w, d = x.shape
    v = x.reshape(n, h // ph, ph, w // pw, pw, d).transpose(0, 1, 3, 2, 4, 5)
    return v.reshape(n, h // ph, w // pw, ph * pw, d)


def _expand_windows(g6, ph, pw):
    n, oh, ow, _, d = g6.shape
    g = g6.reshape(n, oh, ow, ph, pw, d).transpose(0, 1, 3, 2, 4, 5)
    return np.ascontiguousarray(g.reshape(n, oh * ph, ow * pw, d))


def pool_max(stack, spec):
    x, ph, pw = _checked(stack, spec)
    out, switches = kernels.pool_max_forward(x, ph, pw)
    return PoolForward(
        output=out, strategy="max", window=(ph, pw), input_shape=x.shape, switches=switches
    )


def pool_average(stack, spec):
    x, ph, pw = _checked(stack, spec)
    out = _window_view(x, ph, pw).mean(axis=3)
    return PoolForward(
        output=out, strategy="average", window=(ph, pw), input_shape=x.shape
    )


def pool_stochastic(stack, spec, rng_seed, train_mode=True):
    """Stochastic pooling: multinomial sample in train mode, weighted mean in test.

    Selection probabilities are rectified activations normalized per window
    and channel; a window summing to zero falls back to the uniform
    distribution. Sampling is driven by one uniform draw per output element
    from ``default_rng(rng_seed)``, so fixed seeds reproduce bitwise.
    """
    x, ph, pw = _checked(stack, spec)
    v = _window_view(x, ph, pw)
    k = ph * pw
    rect = np.clip(v, 0.0, None)
    sums = rect.sum(axis=3, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        probs = np.where(sums > 0, rect / np.where(sums > 0, sums, 1.0), 1.0 / k)

    if train_mode:
        n, oh, ow, _, d = v.shape
        draws = np.random.default_rng(rng_seed).random((n, oh, ow, d))
        cum = np.cumsum(probs, axis=3)
        idx = np.minimum((cum < draws[:, :, :, None, :]).sum(axis=3), k - 1)
        idx = idx.astype(np.int64)
        out = np.take_along_axis(v, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return PoolForward(
            output=np.ascontiguousarray(out),
            strategy="stochastic",
            window=(ph, pw),
            input_shape=x.shape,
            switches=idx,
            train_mode=True,
        )

    out = (probs * v).sum(axis=3)
    return PoolForward(
        output=out,
        strategy="stochastic",
        window=(ph, pw),
        input_shape=x.shape,
        train_mode=False,
        pooled_input=x,
    )


def compute_score_maps(stack, proj, model):
    """Per-frame h x w score maps for a stack under a frozen scorer.

    Flattens the stack to pixel rows, ranks them through the projection and
    ranking model, and folds the scores back to per-frame maps shared by
    every channel.
    """
    x = as_stack(stack)
    n, h, w, d = x.shape
    if d != proj.a.shape[0]:
        raise DimensionError(
            f"stack has {d} channels but projection expects {proj.a.shape[0]}"
        )
    scores = rank_instances(flatten_stack(x), proj, model)
    return unflatten_scores(scores, (n, h, w))


def pool_multipartite(stack, spec, maps):
    """Select, per window, the location with the top score and copy all channels."""
    x, ph, pw = _checked(stack, spec)
    maps = np.ascontiguousarray(maps, dtype=np.float64)
    if maps.shape != x.shape[:3]:
        raise DimensionError(
            f"score maps shaped {maps.shape} do not match stack frames {x.shape[:3]}"
        )
    switches = kernels.pool_shared_argmax(maps, ph, pw)
    out = kernels.pool_gather_shared(x, switches, ph, pw)
    return PoolForward(
        output=out,
        strategy="multipartite",
        window=(ph, pw),
        input_shape=x.shape,
        switches=switches,
    )


def pool_backward(forward, grad_out):
    """Route output gradients back through the recorded forward selection.

    Switch-based strategies place each gradient at its source location;
    average spreads uniformly; stochastic test mode differentiates the
    probability-weighted mean exactly (probabilities depend on the inputs).
    """
    grad_out = np.ascontiguousarray(grad_out, dtype=np.float64)
    if grad_out.shape != forward.output.shape:
        raise DimensionError(
            f"grad shaped {grad_out.shape}, expected {forward.output.shape}"
        )
    ph, pw = forward.window
    k = ph * pw
    if forward.strategy == "average":
        return np.ascontiguousarray(
            (grad_out / k).repeat(ph, axis=1).repeat(pw, axis=2)
        )
    if forward.strategy == "multipartite":
        return kernels.pool_shared_backward(grad_out, forward.switches, ph, pw)
    if forward.strategy == "max" or (forward.strategy == "stochastic" and forward.train_mode):
        return kernels.pool_switch_backward(grad_out, forward.switches, ph, pw)
    if forward.strategy == "stochastic":
        # d(sum_j r_j a_j / s)/d a_k = (2 a_k - out) / s on the active branch.
        v = _window_view(forward.pooled_input, ph, pw)
        rect = np.clip(v, 0.0, None)
        sums = rect.sum(axis=3, keepdims=True)
        out = forward.output[:, :, :, None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            jac = np.where(
                sums > 0,
                np.where(v > 0, (2.0 * v - out) / np.where(sums > 0, sums, 1.0), 0.0),
                1.0 / k,
            )
        return _expand_windows(jac * grad_out[:, :, :, None, :], ph, pw)
    raise DimensionError(f"unknown strategy {forward.strategy!r}")
