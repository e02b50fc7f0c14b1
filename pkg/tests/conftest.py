import os
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parent.parent

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
DATA_DIR = Path(os.environ.get("RANKPOOL_DATA_DIR", REPO_ROOT / "data"))
MNIST_DIR = DATA_DIR / "mnist"


def mnist_available():
    return all(
        (MNIST_DIR / f"{stem}.gz").exists() or (MNIST_DIR / stem).exists()
        for stem in (
            "train-images-idx3-ubyte",
            "train-labels-idx1-ubyte",
            "t10k-images-idx3-ubyte",
            "t10k-labels-idx1-ubyte",
        )
    )


requires_mnist = pytest.mark.skipif(
    not mnist_available(),
    reason="MNIST IDX files not found; run scripts/fetch_mnist.py or set RANKPOOL_DATA_DIR",
)


def mnist_paths(split):
    stems = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }[split]
    out = []
    for stem in stems:
        gz = MNIST_DIR / f"{stem}.gz"
        out.append(gz if gz.exists() else MNIST_DIR / stem)
    return tuple(out)
