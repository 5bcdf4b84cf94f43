#!/usr/bin/env python3
"""Build data/mnist/{images-idx3-ubyte,labels-idx1-ubyte} from the `mnist`
npm package (10,000 MNIST digits stored as JSON).

    python3 scripts/fetch_mnist.py            # downloads with `npm pack`
    python3 scripts/fetch_mnist.py --from DIR # an unpacked package directory

Digits are interleaved class by class so any prefix is roughly balanced.
"""

import argparse
import json
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

PIXELS = 28 * 28


def unpack(dest):
    subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=dest, check=True)
    tgz = next(Path(dest).glob("mnist-*.tgz"))
    with tarfile.open(tgz) as tar:
        tar.extractall(dest, filter="data")
    return Path(dest) / "package"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--from", dest="src", type=Path)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data" / "mnist")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.src or unpack(tmp)
        per_class = []
        for c in range(10):
            flat = json.loads((pkg / "src" / "digits" / f"{c}.json").read_text())["data"]
            per_class.append([flat[i:i + PIXELS] for i in range(0, len(flat), PIXELS)])

    images, labels = bytearray(), bytearray()
    for k in range(max(map(len, per_class))):
        for c, digits in enumerate(per_class):
            if k < len(digits):
                images += bytes(min(255, round(v * 255)) for v in digits[k])
                labels.append(c)

    n = len(labels)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + images)
    (args.out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)
    print(f"wrote {n} digits to {args.out}")


if __name__ == "__main__":
    main()
