#!/usr/bin/env python3
"""Fetch 10,000 MNIST digits from the `mnist` npm package and write them as IDX files.

The package (MIT licensed) stores each digit class as a JSON array of pixels
scaled to [0, 1] and rounded to three decimals; round(v * 255) recovers the
original bytes. Output goes to data/mnist/ (or the directory given as the
first argument) as mnist10k-images-idx3-ubyte and mnist10k-labels-idx1-ubyte,
digits grouped by class 0..9.

Requires `npm` on PATH. The library itself never downloads anything.
"""

import json
import pathlib
import struct
import subprocess
import sys
import tarfile
import tempfile

PACKAGE = "mnist@1.1.0"
SIDE = 28


def main() -> int:
    out_dir = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist")
    out_dir.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", PACKAGE, "--silent"], cwd=tmp, check=True, stdout=subprocess.DEVNULL)
        tarball = next(pathlib.Path(tmp).glob("mnist-*.tgz"))
        with tarfile.open(tarball) as tar:
            tar.extractall(tmp, filter="data")
        digits = pathlib.Path(tmp, "package", "src", "digits")
        images, labels = bytearray(), bytearray()
        for label in range(10):
            pixels = json.loads((digits / f"{label}.json").read_text())["data"]
            if len(pixels) % (SIDE * SIDE):
                raise SystemExit(f"digit {label}: {len(pixels)} values is not a whole number of images")
            images.extend(round(v * 255) for v in pixels)
            labels.extend([label] * (len(pixels) // (SIDE * SIDE)))
    count = len(labels)
    (out_dir / "mnist10k-images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, count, SIDE, SIDE) + images)
    (out_dir / "mnist10k-labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, count) + labels)
    print(f"wrote {count} digits to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
