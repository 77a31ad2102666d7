#!/usr/bin/env python3
"""Write the 5000-digit MNIST sample bundled with mlxtend as IDX files.

The full MNIST files are preferable; this is a fallback for machines that can
reach a PyPI mirror but not the MNIST hosts.

    python3 tools/mnist_subset_to_idx.py data/mnist5k
"""
import argparse
import gzip
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def fetch_wheel(dest: pathlib.Path) -> pathlib.Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", str(dest), "mlxtend"],
                   check=True)
    wheels = sorted(dest.glob("mlxtend-*.whl"))
    if not wheels:
        sys.exit("pip did not produce an mlxtend wheel")
    return wheels[-1]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--wheel", type=pathlib.Path, help="use an already downloaded mlxtend wheel")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or fetch_wheel(pathlib.Path(tmp))
        rows = gzip.decompress(zipfile.ZipFile(wheel).read(MEMBER)).decode().splitlines()

    images = bytearray()
    labels = bytearray()
    for line in rows:
        vals = [int(float(v)) for v in line.split(",")]
        if len(vals) != 785:
            sys.exit(f"unexpected row width {len(vals)}")
        images.extend(vals[:784])  # pixels, row-major 28x28
        labels.append(vals[784])

    n = len(labels)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, 28, 28) + bytes(images))
    (args.out_dir / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + bytes(labels))
    print(f"wrote {n} images to {args.out_dir}")


if __name__ == "__main__":
    main()
