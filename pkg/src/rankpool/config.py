"""Experiment configuration: a flat key = value text file.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Unknown keys are rejected so typos fail loudly. Keys and defaults:

    dataset            mnist | cifar10 | blobs      (required)
    data_dir           dataset root; defaults to $RANKPOOL_DATA_DIR or ./data
    per_class_train    stratified train subset per class, 0 = all   (0)
    per_class_test     stratified test subset per class, 0 = all    (0)
    mean_center        subtract the train-set mean image: true|false (false)
    strategies         comma list of max|average|stochastic|multipartite
                                                     (all four)
    seed               master seed                   (0)
    epochs             (5)          batch_size       (100)
    learning_rate      (0.01)       momentum         (0.9)
    weight_decay       (0.0001)
    lr_decay_factor    multiplier applied late in training (0.1)
    lr_decay_frac      fraction of epochs before the decay kicks in (0.667)
    pool_refresh       per-epoch | every-<k>-batches | once   (per-epoch)
    score_sample_cap   max pixel rows per scorer fit (100000)
    rank_bins          histogram bins for ranking    (64)
    arch               preset name, only "small"     (small)
    conv1_filters      (20)         conv2_filters    (50)
    fc_units           (500)        kernel           (5)
    pool_window        (2)          init_std         (0.01)
    out_dir            output directory              (./runs)
    blobs_n            synthetic dataset sizing when dataset = blobs (512)
    blobs_classes      (4)          blobs_size       (16)
"""

import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .nn import TrainConfig

_STRATEGIES = ("max", "average", "stochastic", "multipartite")

_DEFAULTS = {
    "dataset": None,
    "data_dir": None,
    "per_class_train": "0",
    "per_class_test": "0",
    "mean_center": "false",
    "strategies": "max, average, stochastic, multipartite",
    "seed": "0",
    "epochs": "5",
    "batch_size": "100",
    "learning_rate": "0.01",
    "momentum": "0.9",
    "weight_decay": "0.0001",
    "lr_decay_factor": "0.1",
    "lr_decay_frac": "0.667",
    "pool_refresh": "per-epoch",
    "score_sample_cap": "100000",
    "rank_bins": "64",
    "arch": "small",
    "conv1_filters": "20",
    "conv2_filters": "50",
    "fc_units": "500",
    "kernel": "5",
    "pool_window": "2",
    "init_std": "0.01",
    "out_dir": "runs",
    "blobs_n": "512",
    "blobs_classes": "4",
    "blobs_size": "16",
}


@dataclass
class ExperimentConfig:
    dataset: str
    data_dir: Path
    per_class_train: int
    per_class_test: int
    strategies: list
    out_dir: Path
    train: TrainConfig
    arch: dict = field(default_factory=dict)
    blobs: dict = field(default_factory=dict)
    mean_center: bool = False


def _parse_lines(text, path="<config>"):
    values = dict(_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _to_int(values, key, minimum=0):
    try:
        out = int(values[key])
    except ValueError as exc:
        raise ConfigError(f"key {key}: {values[key]!r} is not an integer") from exc
    if out < minimum:
        raise ConfigError(f"key {key}: must be >= {minimum}")
    return out


def _to_float(values, key):
    try:
        return float(values[key])
    except ValueError as exc:
        raise ConfigError(f"key {key}: {values[key]!r} is not a number") from exc


def load_config(path, seed_override=None, out_override=None):
    """Parse and validate an experiment config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = _parse_lines(text, str(path))

    if values["dataset"] not in ("mnist", "cifar10", "blobs"):
        raise ConfigError(f"dataset must be mnist, cifar10 or blobs, got {values['dataset']!r}")
    strategies = [s.strip() for s in values["strategies"].split(",") if s.strip()]
    if not strategies:
        raise ConfigError("at least one pooling strategy is required")
    for s in strategies:
        if s not in _STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    if values["arch"] != "small":
        raise ConfigError(f"unknown arch preset {values['arch']!r}")

    data_dir = values["data_dir"] or os.environ.get("RANKPOOL_DATA_DIR", "data")
    seed = seed_override if seed_override is not None else _to_int(values, "seed")

    train = TrainConfig(
        epochs=_to_int(values, "epochs", minimum=1),
        batch_size=_to_int(values, "batch_size", minimum=1),
        learning_rate=_to_float(values, "learning_rate"),
        momentum=_to_float(values, "momentum"),
        weight_decay=_to_float(values, "weight_decay"),
        lr_decay_factor=_to_float(values, "lr_decay_factor"),
        lr_decay_frac=_to_float(values, "lr_decay_frac"),
        seed=seed,
        pool_refresh=values["pool_refresh"],
        score_sample_cap=_to_int(values, "score_sample_cap", minimum=1),
        rank_bins=_to_int(values, "rank_bins", minimum=2),
    )
    try:
        train.refresh_every_batches()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    arch = {
        "conv1_filters": _to_int(values, "conv1_filters", minimum=1),
        "conv2_filters": _to_int(values, "conv2_filters", minimum=1),
        "fc_units": _to_int(values, "fc_units", minimum=1),
        "kernel": _to_int(values, "kernel", minimum=1),
        "pool_window": _to_int(values, "pool_window", minimum=1),
        "init_std": _to_float(values, "init_std"),
    }
    blobs = {
        "n": _to_int(values, "blobs_n", minimum=2),
        "c": _to_int(values, "blobs_classes", minimum=2),
        "size": _to_int(values, "blobs_size", minimum=4),
    }
    flag = values["mean_center"].strip().lower()
    if flag not in ("true", "false"):
        raise ConfigError(f"mean_center must be true or false, got {flag!r}")
    return ExperimentConfig(
        dataset=values["dataset"],
        data_dir=Path(data_dir),
        per_class_train=_to_int(values, "per_class_train"),
        per_class_test=_to_int(values, "per_class_test"),
        strategies=strategies,
        out_dir=Path(out_override) if out_override else Path(values["out_dir"]),
        train=train,
        arch=arch,
        blobs=blobs,
        mean_center=flag == "true",
    )
