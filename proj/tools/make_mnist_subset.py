#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

The source is the 5,000-sample MNIST CSV shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, rows of 784 pixels followed by the label).
The source is sorted by label (500 per class). Each split takes an equal
number of samples per class: the first --train/10 of every class go to the
training split, the next --test/10 to the test split. Samples are interleaved
round-robin over the classes.
"""
import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path


def read_rows(source: Path):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as zf:
            raw = zf.read("mlxtend/data/data/mnist_5k.csv.gz")
        text = gzip.decompress(raw).decode()
    else:
        text = gzip.open(source, "rt").read()
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:-1], vals[-1]))
    return rows


def write_idx(prefix: Path, rows):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source", type=Path, help="mlxtend wheel or mnist_5k.csv.gz")
    ap.add_argument("--out", type=Path, default=Path("data/mnist-1k"))
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=1000)
    args = ap.parse_args()

    rows = read_rows(args.source)
    by_class = {c: [r for r in rows if r[1] == c] for c in range(10)}
    per_train, per_test = args.train // 10, args.test // 10
    if any(len(v) < per_train + per_test for v in by_class.values()):
        raise SystemExit("source has too few samples per class")

    def interleave(lo, hi):
        return [by_class[c][i] for i in range(lo, hi) for c in range(10)]

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train", interleave(0, per_train))
    write_idx(args.out / "t10k", interleave(per_train, per_train + per_test))


if __name__ == "__main__":
    main()
