#!/usr/bin/env python3
"""Build the small MNIST 0/1 IDX fixture used by the test suite.

Source: the `mnist` npm package (MIT), which ships a subset of MNIST digits
as JSON arrays of pixel/255 values rounded to three decimals. Rounding back
to bytes is exact at that precision.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/build_mnist01_fixture.py package/src/digits crates/core/tests/data/mnist01
"""
import json
import os
import struct
import sys


def main(digits_dir, out_dir):
    images, labels = [], []
    for digit in (0, 1):
        with open(os.path.join(digits_dir, f"{digit}.json")) as fh:
            flat = json.load(fh)["data"]
        for i in range(len(flat) // 784):
            images.append(bytes(int(round(v * 255)) for v in flat[i * 784:(i + 1) * 784]))
            labels.append(digit)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "train-images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            fh.write(img)
    with open(os.path.join(out_dir, "train-labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">II", 2049, len(labels)))
        fh.write(bytes(labels))
    print(f"{labels.count(0)} zeros, {labels.count(1)} ones")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
