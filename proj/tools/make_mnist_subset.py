#!/usr/bin/env python3
"""Builds the bundled MNIST subset and the loader test fixtures.

The 5000-image MNIST sample shipped inside the mlxtend wheel (500 images per
class) is shuffled with a fixed seed and written as IDX files: 4000 training
and 1000 test images. Also writes a 10-image IDX fixture and a 5-record
CIFAR-10 binary fixture with deterministic pixel bytes.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent


def write_idx(images, labels, image_path, label_path):
    n, rows, cols = images.shape
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", 2049, n))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel = zipfile.ZipFile(sys.argv[1])
    raw = gzip.decompress(wheel.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",").astype(np.int64)
    labels = table[:, -1]
    images = table[:, :-1].reshape(-1, 28, 28)
    order = np.random.default_rng(35).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = ROOT / "data" / "mnist-subset"
    out.mkdir(parents=True, exist_ok=True)
    write_idx(images[:4000], labels[:4000],
              out / "train-images-idx3-ubyte", out / "train-labels-idx1-ubyte")
    write_idx(images[4000:], labels[4000:],
              out / "t10k-images-idx3-ubyte", out / "t10k-labels-idx1-ubyte")

    fixtures = ROOT / "tests" / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    write_idx(images[4000:4010], labels[4000:4010],
              fixtures / "mnist10-images-idx3-ubyte", fixtures / "mnist10-labels-idx1-ubyte")

    rng = np.random.default_rng(7)
    with open(fixtures / "cifar5.bin", "wb") as f:
        for label in [3, 0, 9, 5, 1]:
            f.write(bytes([label]))
            f.write(rng.integers(0, 256, size=3 * 32 * 32, dtype=np.uint8).tobytes())


if __name__ == "__main__":
    main()
