#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the digits bundled with the
`mnist` npm package (https://www.npmjs.com/package/mnist).

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_subset.py package/src/digits data/mnist-subset

Writes train-images-idx3-ubyte.gz / train-labels-idx1-ubyte.gz (8000 samples)
and t10k-images-idx3-ubyte.gz / t10k-labels-idx1-ubyte.gz (remaining samples).
"""
import gzip
import json
import os
import random
import struct
import sys


def main():
    src, out = sys.argv[1], sys.argv[2]
    samples = []
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        n = len(data) // 784
        for i in range(n):
            pixels = bytes(
                max(0, min(255, round(v * 255))) for v in data[i * 784:(i + 1) * 784]
            )
            samples.append((digit, pixels))
    random.Random(20240607).shuffle(samples)
    n_train = 8000
    splits = {"train": samples[:n_train], "t10k": samples[n_train:]}
    os.makedirs(out, exist_ok=True)
    for name, rows in splits.items():
        with gzip.GzipFile(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), "wb", mtime=0) as fh:
            fh.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
            for _, px in rows:
                fh.write(px)
        with gzip.GzipFile(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), "wb", mtime=0) as fh:
            fh.write(struct.pack(">II", 0x00000801, len(rows)))
            fh.write(bytes(label for label, _ in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
