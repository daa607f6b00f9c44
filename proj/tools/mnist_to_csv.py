#!/usr/bin/env python3
"""Convert MNIST idx files into a qdesign instance.

Columns of A are flattened images scaled to [0, 1] (one image per column),
optionally normalized to unit norm. The target c is the mean image of the
selected class, or of all images when no class is given.

    mnist_to_csv.py train-images-idx3-ubyte train-labels-idx1-ubyte out/mnist \
        --count 2000 --lambda 0.4 --normalize
"""

import argparse
import json
import struct

import numpy as np


def read_idx(path):
    with open(path, "rb") as f:
        _, dtype, ndim = struct.unpack(">HBB", f.read(4))
        shape = struct.unpack(">" + "I" * ndim, f.read(4 * ndim))
        return np.frombuffer(f.read(), dtype=np.uint8).reshape(shape)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("images")
    ap.add_argument("labels")
    ap.add_argument("prefix")
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--target-class", type=int, default=None)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.4)
    ap.add_argument("--normalize", action="store_true")
    args = ap.parse_args()

    images = read_idx(args.images).astype(np.float64) / 255.0
    labels = read_idx(args.labels)
    A = images[: args.count].reshape(args.count, -1).T
    pool = images if args.target_class is None else images[labels == args.target_class]
    c = pool.reshape(len(pool), -1).mean(axis=0)
    if args.normalize:
        norms = np.linalg.norm(A, axis=0)
        A[:, norms > 0] /= norms[norms > 0]

    np.savetxt(args.prefix + "_A.csv", A, delimiter=",", fmt="%.17g")
    np.savetxt(args.prefix + "_K.csv", c[:, None], delimiter=",", fmt="%.17g")
    with open(args.prefix + ".json", "w") as f:
        json.dump({"lambda": args.lam, "m": A.shape[0], "p": A.shape[1], "r": 1}, f, indent=2)


if __name__ == "__main__":
    main()
