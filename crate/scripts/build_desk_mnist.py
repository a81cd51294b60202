#!/usr/bin/env python3
"""Rebuild data/desk-mnist/ from the digits bundled in the `mnist` npm package.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/build_desk_mnist.py package/src/digits data/desk-mnist

The package stores ~1000 MNIST digits per class as 28x28 float arrays with
values byte/255 rounded to three decimals, so the original bytes are
recovered exactly by round(v * 255). The last 100 digits of every class form
the test split; the rest form the training pool. Both splits are written as
gzipped IDX files with classes interleaved round-robin.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

TEST_PER_CLASS = 100
SIDE = 28


def write_idx(path, images, labels):
    n = len(images)
    with gzip.GzipFile(path + "-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, SIDE, SIDE))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path + "-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(labels))


def interleave(per_class):
    out_img, out_lab = [], []
    longest = max(len(v) for v in per_class)
    for i in range(longest):
        for c, imgs in enumerate(per_class):
            if i < len(imgs):
                out_img.append(imgs[i])
                out_lab.append(c)
    return out_img, out_lab


def main(src, dst):
    train, test = [], []
    for c in range(10):
        raw = json.load(open(Path(src) / f"{c}.json"))["data"]
        px = [round(v * 255) for v in raw]
        assert all(round(b / 255, 3) == v for b, v in zip(px, raw))
        imgs = [px[k : k + SIDE * SIDE] for k in range(0, len(px), SIDE * SIDE)]
        train.append(imgs[:-TEST_PER_CLASS])
        test.append(imgs[-TEST_PER_CLASS:])
    Path(dst).mkdir(parents=True, exist_ok=True)
    write_idx(str(Path(dst) / "train"), *interleave(train))
    write_idx(str(Path(dst) / "test"), *interleave(test))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
