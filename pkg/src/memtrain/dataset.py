"""Image-dataset ingestion: IDX files, pixel scaling, and the bundled subset.

Readers accept the four-file layout the MNIST distribution uses (big-endian
IDX records, optionally gzip-compressed) and normalize pixels to [0, 1].
A small deterministic subset ships inside the package so the test suite and
quick experiments run without any download; full-size files are picked up
from ``MEMTRAIN_DATA_DIR`` or an explicit directory when present.
"""

from __future__ import annotations

import gzip
import hashlib
import math
import os
import shutil
import struct
import urllib.request
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import BadMagic, CountMismatch, DataError, TruncatedFile

__all__ = [
    "DATA_DIR_ENV",
    "MNIST_FILES",
    "Dataset",
    "fetch_mnist",
    "load_ci_subset",
    "load_mnist",
    "read_idx_images",
    "read_idx_labels",
    "resolve_dataset",
]

_IMAGE_MAGIC = 0x00000803
_LABEL_MAGIC = 0x00000801

#: Environment variable naming a directory with the four full-size files.
DATA_DIR_ENV = "MEMTRAIN_DATA_DIR"

#: Canonical archive names, keyed by role, in loader argument order.
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}

_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"

_MD5 = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}


# ---------------------------------------------------------------------------
# container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """A train/test split with flat pixel rows in [0, 1] and digit labels."""

    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray

    def __post_init__(self):
        for split, images, labels in (
            ("train", self.train_images, self.train_labels),
            ("test", self.test_images, self.test_labels),
        ):
            if images.ndim != 2:
                raise DataError(f"{split} images must be 2-D, got {images.ndim}-D")
            if labels.ndim != 1:
                raise DataError(f"{split} labels must be 1-D, got {labels.ndim}-D")
            if images.shape[0] != labels.shape[0]:
                raise CountMismatch(
                    f"{split}: {images.shape[0]} images vs {labels.shape[0]} labels"
                )
            if images.size and (images.min() < 0.0 or images.max() > 1.0):
                raise DataError(f"{split} pixels outside [0, 1]")
            if labels.size and (labels.min() < 0 or labels.max() > 9):
                raise DataError(f"{split} labels outside [0, 9]")
        if self.train_images.shape[1] != self.test_images.shape[1]:
            raise DataError(
                "train and test images disagree on pixel count: "
                f"{self.train_images.shape[1]} vs {self.test_images.shape[1]}"
            )

    @property
    def n_train(self) -> int:
        return self.train_images.shape[0]

    @property
    def n_test(self) -> int:
        return self.test_images.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.train_images.shape[1]


# ---------------------------------------------------------------------------
# IDX readers
# ---------------------------------------------------------------------------

def _open_binary(path: str):
    """Open a file for reading, transparently ungzipping by signature."""
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_exact(fh, count: int, path: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise TruncatedFile(
            f"{path}: needed {count} more bytes, file ended after {len(data)}"
        )
    return data


def _read_idx(path, expected_magic: int, ndim: int) -> np.ndarray:
    path = os.fspath(path)
    try:
        fh = _open_binary(path)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        try:
            (magic,) = struct.unpack(">I", _read_exact(fh, 4, path))
        except (OSError, EOFError) as exc:  # corrupt gzip stream
            raise TruncatedFile(f"{path}: {exc}") from exc
        if magic != expected_magic:
            raise BadMagic(
                f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
            )
        try:
            dims = struct.unpack(f">{ndim}I", _read_exact(fh, 4 * ndim, path))
            payload = _read_exact(fh, math.prod(dims), path)
        except (OSError, EOFError) as exc:
            raise TruncatedFile(f"{path}: {exc}") from exc
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    """Read an image IDX file into a uint8 array of shape (n, rows, cols)."""
    return _read_idx(path, _IMAGE_MAGIC, 3)


def read_idx_labels(path) -> np.ndarray:
    """Read a label IDX file into a uint8 vector."""
    return _read_idx(path, _LABEL_MAGIC, 1)


# ---------------------------------------------------------------------------
# loaders
# ---------------------------------------------------------------------------

def load_mnist(train_images, train_labels, test_images, test_labels) -> Dataset:
    """Load four IDX files and return a Dataset with pixels scaled by 1/255."""
    tr_x = read_idx_images(train_images)
    tr_y = read_idx_labels(train_labels)
    te_x = read_idx_images(test_images)
    te_y = read_idx_labels(test_labels)
    if tr_x.shape[0] != tr_y.shape[0]:
        raise CountMismatch(
            f"train: {tr_x.shape[0]} images vs {tr_y.shape[0]} labels"
        )
    if te_x.shape[0] != te_y.shape[0]:
        raise CountMismatch(
            f"test: {te_x.shape[0]} images vs {te_y.shape[0]} labels"
        )
    return Dataset(
        train_images=tr_x.reshape(tr_x.shape[0], -1).astype(np.float64) / 255.0,
        train_labels=tr_y.astype(np.int64),
        test_images=te_x.reshape(te_x.shape[0], -1).astype(np.float64) / 255.0,
        test_labels=te_y.astype(np.int64),
    )


def load_ci_subset() -> Dataset:
    """Load the deterministic 1000-train / 797-test subset bundled in the wheel."""
    root = resources.files("memtrain").joinpath("data/ci_subset")
    with resources.as_file(root) as base:
        return load_mnist(*(Path(base) / MNIST_FILES[k] for k in MNIST_FILES))


def resolve_dataset(data_dir: str | os.PathLike | None = None) -> Dataset:
    """Load the full dataset if a directory is given, else the bundled subset.

    The directory comes from `data_dir` or the MEMTRAIN_DATA_DIR environment
    variable and must hold the four canonical files, gzipped or not.
    """
    chosen = data_dir if data_dir is not None else os.environ.get(DATA_DIR_ENV)
    if not chosen:
        return load_ci_subset()
    base = Path(chosen)
    if not base.is_dir():
        raise DataError(f"dataset directory not found: {base}")
    paths = []
    for key in MNIST_FILES:
        gz = base / MNIST_FILES[key]
        plain = gz.with_suffix("")
        paths.append(gz if gz.exists() else plain)
    return load_mnist(*paths)


# ---------------------------------------------------------------------------
# download helper
# ---------------------------------------------------------------------------

def _md5(path: Path) -> str:
    digest = hashlib.md5()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def fetch_mnist(dest_dir, base_url: str = _MIRROR) -> dict[str, Path]:
    """Download the four archives into dest_dir, verifying MD5 checksums.

    Files already present with a good checksum are kept. Returns the four
    paths keyed like MNIST_FILES. Raises DataError on checksum mismatch.
    """
    dest = Path(dest_dir)
    dest.mkdir(parents=True, exist_ok=True)
    out: dict[str, Path] = {}
    for key, name in MNIST_FILES.items():
        target = dest / name
        if not (target.exists() and _md5(target) == _MD5[name]):
            partial = target.with_suffix(target.suffix + ".part")
            with urllib.request.urlopen(base_url + name) as resp:
                with open(partial, "wb") as fh:
                    shutil.copyfileobj(resp, fh)
            if _md5(partial) != _MD5[name]:
                partial.unlink(missing_ok=True)
                raise DataError(f"checksum mismatch for {name} from {base_url}")
            partial.replace(target)
        out[key] = target
    return out
