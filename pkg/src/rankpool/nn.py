"""Minimal deterministic CPU convolutional network engine.

Layers: valid stride-1 convolution (im2col + GEMM), relu, the pooling
strategies from rankpool.pooling, fully-connected, and a final softmax
cross-entropy loss. Training is plain minibatch SGD with momentum and
optional weight decay; every source of randomness is drawn from one seeded
generator, so a fixed seed reproduces a run bitwise.

Multipartite pool layers own a frozen (projection, ranking model) pair.
The trainer refits those scorers from current activations on a schedule;
forward passes in both train and test mode use whatever is installed, and
evaluation never refits or reads test labels except to compute the error.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import DegenerateLabelsError, DimensionError, NumericError
from .linalg import LabeledMatrix
from .pooling import (
    PoolSpec,
    compute_score_maps,
    pool_average,
    pool_backward,
    pool_max,
    pool_multipartite,
    pool_stochastic,
)
from .projection import FitConfig, fit_projection, project
from .ranking import DEFAULT_BINS, fit_ranking


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | relu | pool | fc | softmax-loss
    kernel: tuple = None  # conv
    out_channels: int = None  # conv
    pool: PoolSpec = None  # pool
    out_units: int = None  # fc


@dataclass
class TrainConfig:
    epochs: int = 5
    batch_size: int = 100
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    pool_refresh: str = "per-epoch"  # per-epoch | every-<k>-batches | once
    score_sample_cap: int = 100_000
    lr_decay_factor: float = 0.1
    lr_decay_frac: float = 2.0 / 3.0
    rank_bins: int = DEFAULT_BINS
    fit_config: FitConfig = field(default_factory=FitConfig)

    def refresh_every_batches(self):
        """k for an every-k-batches policy, else None."""
        if self.pool_refresh.startswith("every-") and self.pool_refresh.endswith("-batches"):
            k = int(self.pool_refresh[len("every-") : -len("-batches")])
            if k < 1:
                raise ValueError("refresh interval must be >= 1")
            return k
        if self.pool_refresh not in ("per-epoch", "once"):
            raise ValueError(f"unknown pool_refresh policy {self.pool_refresh!r}")
        return None


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_err_pct: float
    test_loss: float
    test_err_pct: float
    seconds: float


@dataclass
class TrainReport:
    strategy: str
    rows: list = field(default_factory=list)
    diverged: bool = False


class Network:
    """Layer specs plus parameter arrays and per-layer scorer slots."""

    def __init__(self, layers, input_shape, seed=0, init_std=0.01):
        if not layers or layers[-1].kind != "softmax-loss":
            raise DimensionError("network must end with exactly one softmax-loss layer")
        if sum(1 for l in layers if l.kind == "softmax-loss") != 1:
            raise DimensionError("exactly one loss layer allowed")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)  # (h, w, channels)
        self.params = []
        self.scorers = {}  # layer index -> (Projection, RankingModel)
        rng = np.random.default_rng(seed)

        shape = self.input_shape
        self.layer_shapes = [shape]
        for idx, spec in enumerate(self.layers):
            if spec.kind == "conv":
                kh, kw = spec.kernel
                h, w, cin = shape
                if h < kh or w < kw:
                    raise DimensionError(f"conv kernel {spec.kernel} exceeds input {shape}")
                wgt = rng.normal(0.0, init_std, size=(kh, kw, cin, spec.out_channels))
                self.params.append({"w": wgt, "b": np.zeros(spec.out_channels)})
                shape = (h - kh + 1, w - kw + 1, spec.out_channels)
            elif spec.kind == "relu":
                self.params.append(None)
            elif spec.kind == "pool":
                ph, pw = spec.pool.window
                h, w, c = shape
                if h % ph or w % pw:
                    raise DimensionError(f"pool window {spec.pool.window} does not tile {shape}")
                self.params.append(None)
                shape = (h // ph, w // pw, c)
            elif spec.kind == "fc":
                din = int(np.prod(shape))
                wgt = rng.normal(0.0, init_std, size=(din, spec.out_units))
                self.params.append({"w": wgt, "b": np.zeros(spec.out_units)})
                shape = (spec.out_units,)
            elif spec.kind == "softmax-loss":
                self.params.append(None)
            else:
                raise DimensionError(f"unknown layer kind {spec.kind!r}")
            self.layer_shapes.append(shape)

    @property
    def class_count(self):
        return self.layer_shapes[-2][0] if len(self.layer_shapes) >= 2 else 0

    def multipartite_layers(self):
        return [
            i
            for i, l in enumerate(self.layers)
            if l.kind == "pool" and l.pool.strategy == "multipartite"
        ]


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(net, images, labels=None, mode="train", rng=None):
    """Run the network, caching per-layer state for backward.

    Returns (caches, loss, probs); loss is None when labels are absent.
    Multipartite pool layers score with their installed frozen artifacts in
    both modes; stochastic pooling samples in train mode only, consuming
    one seed from ``rng`` per pool layer per call.
    """
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be train or test, got {mode!r}")
    x = np.ascontiguousarray(images, dtype=np.float64)
    caches = []
    for idx, spec in enumerate(net.layers):
        if spec.kind == "conv":
            kh, kw = spec.kernel
            n, h, w, cin = x.shape
            cols = kernels.im2col(x, kh, kw)
            w2 = net.params[idx]["w"].reshape(kh * kw * cin, -1)
            out = cols @ w2 + net.params[idx]["b"]
            oh, ow = h - kh + 1, w - kw + 1
            caches.append({"cols": cols, "in_shape": x.shape})
            x = out.reshape(n, oh, ow, -1)
        elif spec.kind == "relu":
            mask = x > 0
            caches.append({"mask": mask})
            x = x * mask
        elif spec.kind == "pool":
            pool = spec.pool
            if pool.strategy == "max":
                fwd = pool_max(x, pool)
            elif pool.strategy == "average":
                fwd = pool_average(x, pool)
            elif pool.strategy == "stochastic":
                train_mode = mode == "train"
                seed = int(rng.integers(2**63)) if (train_mode and rng is not None) else 0
                fwd = pool_stochastic(x, pool, rng_seed=seed, train_mode=train_mode)
            else:
                scorer = net.scorers.get(idx)
                if scorer is None:
                    raise RuntimeError(
                        f"multipartite pool layer {idx} has no fitted scorer; "
                        "run refit_pool_scorers first"
                    )
                proj, model = scorer
                maps = compute_score_maps(x, proj, model)
                fwd = pool_multipartite(x, pool, maps)
            caches.append({"pool": fwd})
            x = fwd.output
        elif spec.kind == "fc":
            x2 = x.reshape(x.shape[0], -1)
            caches.append({"x2": x2, "in_shape": x.shape})
            x = x2 @ net.params[idx]["w"] + net.params[idx]["b"]
        else:  # softmax-loss
            probs = _softmax(x)
            loss = None
            if labels is not None:
                labels = np.asarray(labels, dtype=np.int64).reshape(-1)
                picked = probs[np.arange(labels.size), labels]
                loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
            caches.append({"probs": probs, "labels": labels})
            return caches, loss, probs
    raise DimensionError("network has no loss layer")


def backward(net, caches):
    """Parameter gradients of the mean cross-entropy, matching net.params layout."""
    loss_cache = caches[-1]
    probs, labels = loss_cache["probs"], loss_cache["labels"]
    if labels is None:
        raise ValueError("backward requires labels in the forward cache")
    n = probs.shape[0]
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    grad /= n

    grads = [None] * len(net.layers)
    for idx in range(len(net.layers) - 2, -1, -1):
        spec = net.layers[idx]
        cache = caches[idx]
        if spec.kind == "fc":
            x2 = cache["x2"]
            grads[idx] = {"w": x2.T @ grad, "b": grad.sum(axis=0)}
            grad = (grad @ net.params[idx]["w"].T).reshape(cache["in_shape"])
        elif spec.kind == "relu":
            grad = grad * cache["mask"]
        elif spec.kind == "pool":
            grad = pool_backward(cache["pool"], grad)
        elif spec.kind == "conv":
            kh, kw = spec.kernel
            nb, h, w, cin = cache["in_shape"]
            dout2 = grad.reshape(-1, grad.shape[-1])
            cols = cache["cols"]
            w2 = net.params[idx]["w"].reshape(kh * kw * cin, -1)
            grads[idx] = {
                "w": (cols.T @ dout2).reshape(kh, kw, cin, -1),
                "b": dout2.sum(axis=0),
            }
            grad = kernels.col2im(dout2 @ w2.T, nb, h, w, cin, kh, kw)
    return grads


def evaluate(net, images, labels, batch_size=256):
    """Deterministic test-mode loss and error rate over a dataset."""
    total_loss = 0.0
    wrong = 0
    n = images.shape[0]
    for start in range(0, n, batch_size):
        batch = images[start : start + batch_size]
        lab = labels[start : start + batch_size]
        _, loss, probs = forward(net, batch, lab, mode="test")
        total_loss += loss * batch.shape[0]
        wrong += int(np.sum(np.argmax(probs, axis=1) != lab))
    return total_loss / n, 100.0 * wrong / n


def _forward_to_layer(net, images, stop_idx, rng=None):
    """Activations entering layer ``stop_idx`` (train-mode semantics, no sampling noise).

    Used by the scorer refit: runs deterministically, so stochastic pool
    layers upstream (if any) use their test rule to keep refits reproducible.
    """
    x = np.ascontiguousarray(images, dtype=np.float64)
    for idx, spec in enumerate(net.layers[:stop_idx]):
        if spec.kind == "conv":
            kh, kw = spec.kernel
            n, h, w, cin = x.shape
            cols = kernels.im2col(x, kh, kw)
            w2 = net.params[idx]["w"].reshape(kh * kw * cin, -1)
            x = (cols @ w2 + net.params[idx]["b"]).reshape(n, h - kh + 1, w - kw + 1, -1)
        elif spec.kind == "relu":
            x = x * (x > 0)
        elif spec.kind == "pool":
            pool = spec.pool
            if pool.strategy == "max":
                x = pool_max(x, pool).output
            elif pool.strategy == "average":
                x = pool_average(x, pool).output
            elif pool.strategy == "stochastic":
                x = pool_stochastic(x, pool, rng_seed=0, train_mode=False).output
            else:
                proj, model = net.scorers[idx]
                x = pool_multipartite(x, pool, compute_score_maps(x, proj, model)).output
        elif spec.kind == "fc":
            x = x.reshape(x.shape[0], -1) @ net.params[idx]["w"] + net.params[idx]["b"]
    return x


def refit_pool_scorers(net, images, labels, config=None, seed=0):
    """Refit projection + ranking artifacts for every multipartite pool layer.

    Walks the multipartite layers front to back; each refit runs the current
    network (including any scorers already refreshed upstream) to the
    layer's input, flattens activations to pixel rows labeled with their
    frame's class, subsamples rows uniformly (seeded) down to
    score_sample_cap, and fits. A sample missing some class keeps the
    previous artifacts for that layer and warns; with no previous artifacts
    it raises.

    Returns the dict of refreshed artifacts (also installed on the net).
    """
    config = config or TrainConfig()
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    c = net.class_count
    refreshed = {}
    for layer_idx in net.multipartite_layers():
        h, w, d = net.layer_shapes[layer_idx]
        rows_per_frame = h * w
        total_rows = images.shape[0] * rows_per_frame
        cap = min(config.score_sample_cap, total_rows)
        rng = np.random.default_rng(seed)
        chosen = np.sort(rng.choice(total_rows, size=cap, replace=False))

        batch = 256
        picked_rows = np.empty((cap, d))
        picked_labels = np.empty(cap, dtype=np.int64)
        write = 0
        pos = 0
        for start in range(0, images.shape[0], batch):
            imgs = images[start : start + batch]
            row_lo = start * rows_per_frame
            row_hi = row_lo + imgs.shape[0] * rows_per_frame
            upper = np.searchsorted(chosen, row_hi, side="left")
            if upper == pos:
                continue
            local = chosen[pos:upper] - row_lo
            acts = _forward_to_layer(net, imgs, layer_idx)
            flat = acts.reshape(-1, d)
            picked_rows[write : write + local.size] = flat[local]
            frame_labels = np.repeat(labels[start : start + imgs.shape[0]], rows_per_frame)
            picked_labels[write : write + local.size] = frame_labels[local]
            write += local.size
            pos = upper

        present = np.unique(picked_labels)
        if present.size < c:
            if layer_idx in net.scorers:
                warnings.warn(
                    f"scorer refresh for layer {layer_idx} skipped: sample covers "
                    f"{present.size}/{c} classes",
                    stacklevel=2,
                )
                continue
            raise DegenerateLabelsError(
                f"cannot fit initial scorer for layer {layer_idx}: sample covers "
                f"{present.size}/{c} classes"
            )
        proj = fit_projection(LabeledMatrix(picked_rows, picked_labels), config.fit_config)
        model = fit_ranking(project(picked_rows, proj), picked_labels, bins=config.rank_bins)
        net.scorers[layer_idx] = (proj, model)
        refreshed[layer_idx] = (proj, model)
    return refreshed


def _sgd_step(net, grads, velocity, lr, momentum, weight_decay):
    for idx, g in enumerate(grads):
        if g is None:
            continue
        p = net.params[idx]
        for key in ("w", "b"):
            decay = weight_decay * p[key] if key == "w" else 0.0
            velocity[idx][key] = momentum * velocity[idx][key] - lr * (g[key] + decay)
            p[key] += velocity[idx][key]


def train(net, train_images, train_labels, test_images, test_labels, config):
    """SGD-with-momentum training loop producing one metrics row per epoch.

    Scorer refreshes follow config.pool_refresh; the learning rate drops by
    lr_decay_factor once lr_decay_frac of the epochs have elapsed. Both
    train and test metrics come from a deterministic test-mode evaluation
    pass at the end of each epoch. A non-finite loss aborts the run and
    returns the report accumulated so far with ``diverged`` set.
    """
    strategy = next(
        (l.pool.strategy for l in net.layers if l.kind == "pool"), "none"
    )
    report = TrainReport(strategy=strategy)
    rng = np.random.default_rng(config.seed)
    velocity = [
        {"w": np.zeros_like(p["w"]), "b": np.zeros_like(p["b"])} if p else None
        for p in net.params
    ]
    n = train_images.shape[0]
    every_k = config.refresh_every_batches()
    needs_scorers = bool(net.multipartite_layers())
    decay_at = int(np.floor(config.lr_decay_frac * config.epochs))
    state = {"refreshes": 0, "global_batch": 0, "last_refresh_batch": None}

    def refresh():
        refit_pool_scorers(
            net, train_images, train_labels, config,
            seed=config.seed * 1_000_003 + state["refreshes"],
        )
        state["refreshes"] += 1
        state["last_refresh_batch"] = state["global_batch"]

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = config.learning_rate
        if config.epochs > 1 and epoch >= decay_at:
            lr *= config.lr_decay_factor

        if needs_scorers:
            if config.pool_refresh == "per-epoch":
                refresh()
            elif state["last_refresh_batch"] is None:
                refresh()  # bootstrap fit for the once / every-k policies

        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            take = order[start : start + config.batch_size]
            if (
                needs_scorers
                and every_k is not None
                and state["global_batch"] - state["last_refresh_batch"] >= every_k
            ):
                refresh()
            try:
                caches, loss, _ = forward(
                    net, train_images[take], train_labels[take], mode="train", rng=rng
                )
            except NumericError:
                loss = np.nan
            if not np.isfinite(loss):
                report.diverged = True
                return report
            grads = backward(net, caches)
            _sgd_step(net, grads, velocity, lr, config.momentum, config.weight_decay)
            state["global_batch"] += 1

        train_loss, train_err = evaluate(net, train_images, train_labels)
        test_loss, test_err = evaluate(net, test_images, test_labels)
        report.rows.append(
            EpochMetrics(
                epoch=epoch + 1,
                train_loss=train_loss,
                train_err_pct=train_err,
                test_loss=test_loss,
                test_err_pct=test_err,
                seconds=time.perf_counter() - t0,
            )
        )
    return report


def preset_small_net(
    input_shape,
    class_count,
    strategy,
    conv1_filters=20,
    conv2_filters=50,
    fc_units=500,
    kernel=5,
    pool_window=2,
    seed=0,
    init_std=0.01,
):
    """Two conv/pool blocks plus a hidden fc layer; the classic small-image net.

    Rectifiers follow each convolution so pooled activations are nonnegative,
    which the stochastic strategy's sampling rule presumes.
    """
    pool = PoolSpec(window=(pool_window, pool_window), strategy=strategy)
    layers = [
        LayerSpec(kind="conv", kernel=(kernel, kernel), out_channels=conv1_filters),
        LayerSpec(kind="relu"),
        LayerSpec(kind="pool", pool=pool),
        LayerSpec(kind="conv", kernel=(kernel, kernel), out_channels=conv2_filters),
        LayerSpec(kind="relu"),
        LayerSpec(kind="pool", pool=pool),
        LayerSpec(kind="fc", out_units=fc_units),
        LayerSpec(kind="relu"),
        LayerSpec(kind="fc", out_units=class_count),
        LayerSpec(kind="softmax-loss"),
    ]
    return Network(layers, input_shape, seed=seed, init_std=init_std)
