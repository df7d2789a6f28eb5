#!/usr/bin/env python3
"""Convert the digit samples shipped in the npm `mnist` package (v1.1.0) into
gzipped IDX files.

The package stores 10,000 MNIST digits as per-class JSON arrays of pixel
intensities in [0, 1]. Samples are re-quantized to bytes, interleaved with a
fixed shuffle so any prefix is roughly class balanced, and written as
`images-idx3-ubyte.gz` / `labels-idx1-ubyte.gz`.

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/digits_to_idx.py package/src/digits data/digits
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28
SHUFFLE_SEED = 784


def main(src: Path, dst: Path) -> None:
    samples = []
    for label in range(10):
        raw = json.loads((src / f"{label}.json").read_text())["data"]
        count = len(raw) // (SIDE * SIDE)
        for i in range(count):
            pixels = raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            samples.append((bytes(min(255, max(0, round(v * 255))) for v in pixels), label))
    random.Random(SHUFFLE_SEED).shuffle(samples)

    dst.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(dst / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with gzip.GzipFile(dst / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {len(samples)} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
