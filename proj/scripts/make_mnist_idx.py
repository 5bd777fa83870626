#!/usr/bin/env python3
"""Build the bundled MNIST IDX subset under data/mnist/.

Reads the per-digit JSON files shipped with the npm "mnist" package
(https://www.npmjs.com/package/mnist, a 10k-sample repackaging of the
MNIST database) and writes gzipped IDX files with an 80/20 per-class
train/test split.

Usage: make_mnist_idx.py <path-to-package/src/digits> <output-dir>
"""
import gzip
import json
import os
import struct
import sys

import numpy as np


def write_idx_images(path, images):
    header = struct.pack(">IIII", 0x00000803, len(images), 28, 28)
    with gzip.open(path, "wb") as f:
        f.write(header)
        f.write(np.asarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels):
    header = struct.pack(">II", 0x00000801, len(labels))
    with gzip.open(path, "wb") as f:
        f.write(header)
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def main():
    digits_dir, out_dir = sys.argv[1], sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(20240901)

    train_x, train_y, test_x, test_y = [], [], [], []
    for digit in range(10):
        with open(os.path.join(digits_dir, f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        imgs = np.asarray(flat, dtype=np.float64).reshape(-1, 784)
        imgs = np.rint(imgs * 255.0).astype(np.uint8)
        n_train = (imgs.shape[0] * 4) // 5
        train_x.append(imgs[:n_train])
        train_y.append(np.full(n_train, digit, dtype=np.uint8))
        test_x.append(imgs[n_train:])
        test_y.append(np.full(imgs.shape[0] - n_train, digit, dtype=np.uint8))

    def shuffled(xs, ys):
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        return x[order], y[order]

    tr_x, tr_y = shuffled(train_x, train_y)
    te_x, te_y = shuffled(test_x, test_y)

    write_idx_images(os.path.join(out_dir, "train-images-idx3-ubyte.gz"), tr_x)
    write_idx_labels(os.path.join(out_dir, "train-labels-idx1-ubyte.gz"), tr_y)
    write_idx_images(os.path.join(out_dir, "t10k-images-idx3-ubyte.gz"), te_x)
    write_idx_labels(os.path.join(out_dir, "t10k-labels-idx1-ubyte.gz"), te_y)
    print(f"train: {len(tr_y)}  test: {len(te_y)}")


if __name__ == "__main__":
    main()
