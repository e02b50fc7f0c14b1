"""Experiment command line.

Subcommands:
    train       run the configured pooling-strategy comparison
    gradcheck   finite-difference verification of all analytic gradients
    rank-demo   fit a scorer on first-pool-layer activations and dump
                column KL values plus per-class score histograms

Exit codes for train / rank-demo: 0 success, 2 config parse error,
3 dataset load error, 4 divergence (partial metrics retained).

Outputs under --out (or the config's out_dir):
    metrics.csv   strategy,epoch,train_loss,train_err_pct,test_loss,test_err_pct
    timings.csv   strategy,epoch,epoch_seconds   (kept apart so metrics.csv
                  is byte-reproducible for a fixed seed)
    summary.csv   strategy,train_err,test_err    (final epoch per strategy)
    checkpoint_<strategy>.npz
    scorers_multipartite.json                    (multipartite runs only)
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .artifacts import save_checkpoint, save_scorers
from .config import load_config
from .data import load_cifar10, load_mnist, mean_center, subset, synthetic_blobs
from .errors import ConfigError, DataFormatError, RankpoolError
from .linalg import LabeledMatrix
from .nn import _forward_to_layer, preset_small_net, train
from .projection import fit_projection, project
from .ranking import fit_ranking, score_instances

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _mnist_pair(root, stem_images, stem_labels):
    for suffix in ("", ".gz"):
        img = root / f"{stem_images}{suffix}"
        lab = root / f"{stem_labels}{suffix}"
        if img.exists() and lab.exists():
            return img, lab
    raise DataFormatError(f"MNIST files {stem_images}[.gz] not found under {root}")


def load_experiment_datasets(cfg):
    """Train/test Datasets for a parsed ExperimentConfig."""
    if cfg.dataset == "mnist":
        root = cfg.data_dir / "mnist"
        train_ds = load_mnist(*_mnist_pair(root, "train-images-idx3-ubyte", "train-labels-idx1-ubyte"))
        test_ds = load_mnist(*_mnist_pair(root, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"))
    elif cfg.dataset == "cifar10":
        root = cfg.data_dir / "cifar-10-batches-bin"
        batches = [root / f"data_batch_{i}.bin" for i in range(1, 6)]
        missing = [p for p in batches + [root / "test_batch.bin"] if not p.exists()]
        if missing:
            raise DataFormatError(f"CIFAR-10 files missing: {missing[0]}")
        train_ds = load_cifar10(batches)
        test_ds = load_cifar10([root / "test_batch.bin"])
    else:
        size, c = cfg.blobs["size"], cfg.blobs["c"]
        train_ds = synthetic_blobs(cfg.blobs["n"], size, size, c, seed=cfg.train.seed)
        test_ds = synthetic_blobs(
            max(cfg.blobs["n"] // 4, c), size, size, c, seed=cfg.train.seed + 1
        )
    if cfg.per_class_train:
        train_ds = subset(train_ds, cfg.per_class_train, seed=cfg.train.seed)
    if cfg.per_class_test:
        test_ds = subset(test_ds, cfg.per_class_test, seed=cfg.train.seed + 1)
    if cfg.mean_center:
        train_ds, test_ds = mean_center(train_ds, test_ds)
    return train_ds, test_ds


def _build_net(cfg, train_ds, strategy):
    h, w, ch = train_ds.images.shape[1:]
    return preset_small_net(
        (h, w, ch),
        train_ds.class_count,
        strategy,
        conv1_filters=cfg.arch["conv1_filters"],
        conv2_filters=cfg.arch["conv2_filters"],
        fc_units=cfg.arch["fc_units"],
        kernel=cfg.arch["kernel"],
        pool_window=cfg.arch["pool_window"],
        init_std=cfg.arch["init_std"],
        seed=cfg.train.seed,
    )


def run_strategy(cfg, strategy, out_dir):
    """Train one strategy end to end; writes checkpoint/scorer artifacts."""
    train_ds, test_ds = load_experiment_datasets(cfg)
    net = _build_net(cfg, train_ds, strategy)
    report = train(
        net,
        train_ds.images,
        train_ds.labels,
        test_ds.images,
        test_ds.labels,
        cfg.train,
    )
    out_dir = Path(out_dir)
    save_checkpoint(out_dir / f"checkpoint_{strategy}.npz", net)
    if net.scorers:
        save_scorers(out_dir / f"scorers_{strategy}.json", net.scorers)
    return report


def _run_strategy_job(args):
    cfg, strategy, out_dir = args
    return strategy, run_strategy(cfg, strategy, out_dir)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_reports(out_dir, reports):
    """metrics/timings/summary CSVs from {strategy: TrainReport}, config order."""
    out_dir = Path(out_dir)
    metric_rows, timing_rows, summary_rows = [], [], []
    for strategy, report in reports.items():
        for row in report.rows:
            metric_rows.append(
                [
                    strategy,
                    row.epoch,
                    repr(row.train_loss),
                    repr(row.train_err_pct),
                    repr(row.test_loss),
                    repr(row.test_err_pct),
                ]
            )
            timing_rows.append([strategy, row.epoch, repr(row.seconds)])
        if report.rows:
            last = report.rows[-1]
            summary_rows.append(
                [strategy, repr(last.train_err_pct), repr(last.test_err_pct)]
            )
    _write_csv(
        out_dir / "metrics.csv",
        ["strategy", "epoch", "train_loss", "train_err_pct", "test_loss", "test_err_pct"],
        metric_rows,
    )
    _write_csv(out_dir / "timings.csv", ["strategy", "epoch", "epoch_seconds"], timing_rows)
    _write_csv(out_dir / "summary.csv", ["strategy", "train_err", "test_err"], summary_rows)


def cmd_train(args):
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        load_experiment_datasets(cfg)  # fail fast before creating any output
    except (RankpoolError, OSError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    if args.parallel and len(cfg.strategies) > 1:
        jobs = [(cfg, s, str(cfg.out_dir)) for s in cfg.strategies]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            for strategy, report in pool.map(_run_strategy_job, jobs):
                reports[strategy] = report
        reports = {s: reports[s] for s in cfg.strategies}
    else:
        for strategy in cfg.strategies:
            report = run_strategy(cfg, strategy, cfg.out_dir)
            reports[strategy] = report
            if report.diverged:
                break

    write_reports(cfg.out_dir, reports)
    for strategy, report in reports.items():
        status = "DIVERGED" if report.diverged else "ok"
        final = report.rows[-1] if report.rows else None
        err = f"test_err={final.test_err_pct:.2f}%" if final else "no epochs finished"
        print(f"{strategy}: {status} {err}")
    if any(r.diverged for r in reports.values()):
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import run_all

    results = run_all(seed=args.seed or 0)
    ok = True
    for res in results:
        ok &= res.ok
        print(
            f"{res.name:28s} max_rel_err={res.max_rel_error:.3e} "
            f"tol={res.tolerance:.0e} {'PASS' if res.ok else 'FAIL'}"
        )
    return EXIT_OK if ok else 1


def _demo_activations(cfg, rng_seed, max_frames=256):
    train_ds, _ = load_experiment_datasets(cfg)
    frames = min(max_frames, train_ds.n)
    images = train_ds.images[:frames]
    labels = train_ds.labels[:frames]
    net = _build_net(cfg, train_ds, "multipartite")
    first_pool = net.multipartite_layers()[0]
    acts = _forward_to_layer(net, images, first_pool)
    d = acts.shape[-1]
    rows = acts.reshape(-1, d)
    row_labels = np.repeat(labels, acts.shape[1] * acts.shape[2])
    cap = min(cfg.train.score_sample_cap, rows.shape[0])
    pick = np.sort(np.random.default_rng(rng_seed).choice(rows.shape[0], cap, replace=False))
    return rows[pick], row_labels[pick], train_ds.class_count


def cmd_rank_demo(args):
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows, labels, c = _demo_activations(cfg, cfg.train.seed)
    except (RankpoolError, OSError) as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    proj = fit_projection(LabeledMatrix(rows, labels), cfg.train.fit_config)
    model = fit_ranking(project(rows, proj), labels, bins=cfg.train.rank_bins)

    permuted_kl = None
    if args.permute_labels:
        shuffled = np.random.default_rng(cfg.train.seed + 17).permutation(labels)
        perm_model = fit_ranking(project(rows, proj), shuffled, bins=cfg.train.rank_bins)
        permuted_kl = perm_model.column_kl

    header = ["class", "column_kl"] + (["column_kl_permuted"] if permuted_kl is not None else [])
    col_rows = []
    for i in range(c):
        row = [i, repr(float(model.column_kl[i]))]
        if permuted_kl is not None:
            row.append(repr(float(permuted_kl[i])))
        col_rows.append(row)
    _write_csv(cfg.out_dir / "rank_columns.csv", header, col_rows)

    scores = score_instances(project(rows, proj), model)
    edges = np.histogram_bin_edges(scores, bins=32)
    hist_rows = []
    for k in range(c):
        counts, _ = np.histogram(scores[labels == k], bins=edges)
        for b, count in enumerate(counts):
            hist_rows.append([k, repr(float(edges[b])), repr(float(edges[b + 1])), int(count)])
    _write_csv(
        cfg.out_dir / "rank_scores.csv", ["class", "bin_lo", "bin_hi", "count"], hist_rows
    )
    print(f"rank-demo: wrote {cfg.out_dir / 'rank_columns.csv'} ({c} classes)")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rankpool", description="pooling-strategy comparison experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train all configured strategies")
    p_train.add_argument("--config", required=True, help="experiment config file")
    p_train.add_argument("--out", default=None, help="output directory override")
    p_train.add_argument("--seed", type=int, default=None, help="seed override")
    p_train.add_argument(
        "--parallel", action="store_true", help="run strategies in parallel processes"
    )
    p_train.set_defaults(func=cmd_train)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_demo = sub.add_parser("rank-demo", help="score-statistics demo on one pool layer")
    p_demo.add_argument("--config", required=True)
    p_demo.add_argument("--out", default=None)
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.add_argument(
        "--permute-labels",
        action="store_true",
        help="also fit on permuted labels as a null control",
    )
    p_demo.set_defaults(func=cmd_rank_demo)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
