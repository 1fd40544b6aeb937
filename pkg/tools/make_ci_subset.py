"""Build the bundled CI dataset: scikit-learn digits re-cut to 28x28 IDX files.

The 8x8 digits corpus (1797 samples, intensities 0..16) is nearest-neighbor
upsampled by 3x to 24x24, padded with a 2-pixel border to 28x28, rescaled to
0..255, shuffled with a fixed seed, and split 1000 train / 797 test. Output
is four gzipped IDX files with the canonical archive names, byte-stable
across reruns (gzip mtime pinned to zero).

Usage: python tools/make_ci_subset.py [--out src/memtrain/data/ci_subset]
"""

from __future__ import annotations

import argparse
import gzip
import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

SEED = 1000
N_TRAIN = 1000

NAMES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}


def to_28x28(images8: np.ndarray) -> np.ndarray:
    """Upsample (n, 8, 8) intensities 0..16 to (n, 28, 28) uint8 0..255."""
    n = images8.shape[0]
    big = np.kron(images8, np.ones((3, 3)))  # (n, 24, 24)
    padded = np.zeros((n, 28, 28))
    padded[:, 2:26, 2:26] = big
    return np.round(padded * (255.0 / 16.0)).clip(0, 255).astype(np.uint8)


def write_idx_gz(path: Path, array: np.ndarray) -> None:
    if array.ndim == 3:
        header = struct.pack(">IIII", 0x00000803, *array.shape)
    elif array.ndim == 1:
        header = struct.pack(">II", 0x00000801, array.shape[0])
    else:
        raise ValueError(f"unexpected rank {array.ndim}")
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
            gz.write(header)
            gz.write(array.astype(np.uint8).tobytes())


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--out",
        type=Path,
        default=Path(__file__).resolve().parents[1]
        / "src/memtrain/data/ci_subset",
    )
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    bunch = load_digits()
    images = to_28x28(bunch.images)
    labels = bunch.target.astype(np.uint8)

    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    splits = {
        "train_images": images[:N_TRAIN],
        "train_labels": labels[:N_TRAIN],
        "test_images": images[N_TRAIN:],
        "test_labels": labels[N_TRAIN:],
    }
    for key, data in splits.items():
        write_idx_gz(args.out / NAMES[key], data)
        print(f"{NAMES[key]}: {data.shape}")


if __name__ == "__main__":
    main()
