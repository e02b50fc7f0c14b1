#!/usr/bin/env python3
"""Download the MNIST IDX files into data/mnist/.

Tries a list of well-known mirrors in order; a corporate proxy for
github.com can be injected via MNIST_MIRROR (base URL that serves the
four canonical .gz files). Files already present are kept.
"""

import os
import sys
import urllib.request
from pathlib import Path

FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist",
    "https://storage.googleapis.com/cvdf-datasets/mnist",
    "https://github.com/fgnt/mnist/raw/master",
]


def fetch(url, dest):
    print(f"  {url}")
    with urllib.request.urlopen(url, timeout=60) as resp:
        dest.write_bytes(resp.read())


def main():
    root = Path(os.environ.get("RANKPOOL_DATA_DIR", Path(__file__).resolve().parent.parent / "data"))
    target = root / "mnist"
    target.mkdir(parents=True, exist_ok=True)
    mirrors = list(MIRRORS)
    if os.environ.get("MNIST_MIRROR"):
        mirrors.insert(0, os.environ["MNIST_MIRROR"].rstrip("/"))

    for name in FILES:
        dest = target / name
        if dest.exists():
            print(f"{name}: already present")
            continue
        for base in mirrors:
            try:
                fetch(f"{base}/{name}", dest)
                break
            except Exception as exc:  # try the next mirror
                print(f"  failed: {exc}")
        else:
            print(f"{name}: no mirror reachable", file=sys.stderr)
            return 1
        print(f"{name}: done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
