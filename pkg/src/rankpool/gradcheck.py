"""Finite-difference verification of every analytic gradient in the package.

Used by the test suite and by the ``rankpool gradcheck`` subcommand. All
checks are deterministic (fixed seeds, deterministic pooling modes);
stochastic pooling is checked in test mode, where its forward is the exact
probability-weighted mean and therefore differentiable.

Relative errors are |analytic - numeric| / max(|analytic|, |numeric|, 1e-5);
the floor keeps incidental near-zero entries from dividing noise by noise.
"""

from dataclasses import dataclass

import numpy as np

from . import projection as projection_mod
from .linalg import ScatterPair
from .nn import LayerSpec, Network, TrainConfig, backward, forward, refit_pool_scorers
from .pooling import STRATEGIES, PoolSpec, pool_backward
from .projection import objective

REL_FLOOR = 1e-5


def rel_error(a, b, floor=REL_FLOOR):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def central_difference(f, x, step):
    """Elementwise central-difference gradient of scalar f at array x."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    probe = x.astype(np.float64).copy().reshape(-1)
    for k in range(probe.size):
        orig = probe[k]
        probe[k] = orig + step
        hi = f(probe.reshape(x.shape))
        probe[k] = orig - step
        lo = f(probe.reshape(x.shape))
        probe[k] = orig
        flat[k] = (hi - lo) / (2.0 * step)
    return grad


def random_scatter_instance(rng, d, c):
    """Random SPD within / PSD between scatter pair plus a projection point."""
    g = rng.normal(size=(d, d))
    s_w = g @ g.T + 0.1 * np.eye(d)
    h = rng.normal(size=(d, max(c - 1, 1)))
    s_b = h @ h.T
    a = rng.normal(scale=1.0 / np.sqrt(d), size=(d, c))
    return ScatterPair(s_w=s_w, s_b=s_b), a


def projection_gradient_check(
    num_instances=50,
    seed=0,
    lambdas=(0.0, 0.1, 1.0, 10.0),
    step=1e-6,
    gradient_fn=None,
):
    """Max relative error of the projection gradient over random instances.

    Instances draw d <= 10, c <= 5 (c <= d) and cycle through the lambda
    grid; gradient_fn defaults to the production gradient and exists so
    tests can verify that a corrupted gradient is actually caught.
    """
    gradient_fn = gradient_fn or projection_mod.gradient
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(num_instances):
        d = int(rng.integers(2, 11))
        c = int(rng.integers(2, min(d, 5) + 1))
        pair, a = random_scatter_instance(rng, d, c)
        lam = lambdas[i % len(lambdas)]
        analytic = gradient_fn(a, pair, lam)
        numeric = central_difference(lambda m: objective(m, pair, lam), a, step)
        worst = max(worst, rel_error(analytic, numeric))
    return worst


def build_tiny_net(strategy, seed=0):
    """8x8x1 input -> conv 3x3x2 -> pool 2x2 -> fc 10 -> softmax.

    Weights are drawn wider than the production init and biases offset
    positive so activations sit away from relu/rectifier kinks, which
    finite differences cannot straddle.
    """
    layers = [
        LayerSpec(kind="conv", kernel=(3, 3), out_channels=2),
        LayerSpec(kind="relu"),
        LayerSpec(kind="pool", pool=PoolSpec(window=(2, 2), strategy=strategy)),
        LayerSpec(kind="fc", out_units=10),
        LayerSpec(kind="softmax-loss"),
    ]
    net = Network(layers, input_shape=(8, 8, 1), seed=seed, init_std=0.5)
    net.params[0]["b"][:] = 0.3
    return net


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def ok(self):
        return self.max_rel_error < self.tolerance


def net_gradient_check(strategy, seed=0, step=1e-5, batch=10):
    """End-to-end parameter-gradient check of the tiny net for one strategy.

    Batch size 10 so every output class appears once, which lets the
    multipartite scorer bootstrap even on this two-channel toy layer.
    """
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.2, 1.0, size=(batch, 8, 8, 1))
    labels = np.arange(batch, dtype=np.int64) % 10
    net = build_tiny_net(strategy, seed=seed)
    if strategy == "multipartite":
        refit_pool_scorers(
            net, images, labels,
            TrainConfig(score_sample_cap=batch * 36, fit_config=projection_mod.FitConfig(max_iters=50)),
        )

    caches, _, _ = forward(net, images, labels, mode="test")
    grads = backward(net, caches)

    def loss_at(idx, key, arr):
        saved = net.params[idx][key]
        net.params[idx][key] = arr
        try:
            _, loss, _ = forward(net, images, labels, mode="test")
        finally:
            net.params[idx][key] = saved
        return loss

    worst = 0.0
    for idx, g in enumerate(grads):
        if g is None:
            continue
        for key in ("w", "b"):
            numeric = central_difference(
                lambda arr, idx=idx, key=key: loss_at(idx, key, arr),
                net.params[idx][key],
                step,
            )
            worst = max(worst, rel_error(g[key], numeric))
    return worst


def pooling_input_gradient_check(strategy, seed=0, step=1e-6):
    """FD check of pool_backward w.r.t. the input stack on a 4x4x2 frame pair.

    Loss is the plain sum of pooled outputs. Inputs are kept positive and
    away from window ties so selections stay stable under perturbation.
    """
    from .pooling import pool_average, pool_max, pool_multipartite, pool_stochastic

    rng = np.random.default_rng(seed)
    stack = rng.uniform(0.1, 1.0, size=(2, 4, 4, 2))
    spec = PoolSpec(window=(2, 2), strategy=strategy)
    maps = rng.uniform(0.0, 1.0, size=(2, 4, 4))

    def run(x):
        if strategy == "max":
            return pool_max(x, spec)
        if strategy == "average":
            return pool_average(x, spec)
        if strategy == "stochastic":
            return pool_stochastic(x, spec, rng_seed=7, train_mode=False)
        return pool_multipartite(x, spec, maps)

    fwd = run(stack)
    analytic = pool_backward(fwd, np.ones_like(fwd.output))
    numeric = central_difference(lambda x: float(run(x).output.sum()), stack, step)
    return rel_error(analytic, numeric)


def run_all(seed=0, gradient_fn=None, tol_projection=1e-4, tol_net=1e-3):
    """Every gradient check in one sweep; returns a list of CheckResult."""
    results = [
        CheckResult(
            name="projection-objective",
            max_rel_error=projection_gradient_check(seed=seed, gradient_fn=gradient_fn),
            tolerance=tol_projection,
        ),
        CheckResult(
            name="projection-objective-lambda0",
            max_rel_error=projection_gradient_check(
                seed=seed + 1, lambdas=(0.0,), gradient_fn=gradient_fn
            ),
            tolerance=tol_projection,
        ),
    ]
    for strategy in STRATEGIES:
        results.append(
            CheckResult(
                name=f"pool-input-{strategy}",
                max_rel_error=pooling_input_gradient_check(strategy, seed=seed),
                tolerance=tol_net,
            )
        )
        results.append(
            CheckResult(
                name=f"tiny-net-{strategy}",
                max_rel_error=net_gradient_check(strategy, seed=seed),
                tolerance=tol_net,
            )
        )
    return results
