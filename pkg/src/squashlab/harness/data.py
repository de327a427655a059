"""Dataset readers and synthetic fixtures."""
from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from ..hqnn import Dataset

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
MNIST_SIDE = 28
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DataError(ValueError):
    pass


def _read_bytes(path: Path) -> bytes:
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except OSError as err:
        raise DataError(f"cannot read {path}: {err}") from None


def read_idx(path: str | Path, magic: int) -> np.ndarray:
    """Read an unsigned-byte IDX file whose big-endian magic must equal ``magic``."""
    path = Path(path)
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataError(f"{path}: truncated header")
    found = int.from_bytes(raw[:4], "big")
    if found != magic:
        raise DataError(f"{path}: bad magic number {found}, expected {magic}")
    ndim = raw[3]
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise DataError(f"{path}: truncated header")
    shape = tuple(int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim))
    size = int(np.prod(shape))
    if len(raw) - head < size:
        raise DataError(f"{path}: truncated data ({len(raw) - head} of {size} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=head).reshape(shape)


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write a uint8 array (1-d labels or 3-d images) as IDX."""
    a = np.asarray(array)
    if a.dtype != np.uint8 or a.ndim not in (1, 3):
        raise DataError("IDX writer takes uint8 labels (1-d) or images (3-d)")
    magic = LABEL_MAGIC if a.ndim == 1 else IMAGE_MAGIC
    header = magic.to_bytes(4, "big") + b"".join(int(n).to_bytes(4, "big") for n in a.shape)
    payload = header + np.ascontiguousarray(a).tobytes()
    path = Path(path)
    if path.suffix == ".gz":
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)


def average_pool(images: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping ``factor x factor`` mean pooling of ``(n, h, w)`` images."""
    n, rows, cols = images.shape
    if factor < 1 or rows % factor or cols % factor:
        raise DataError(f"pooling {factor} does not divide the {rows}x{cols} image")
    return images.reshape(n, rows // factor, factor, cols // factor, factor).mean(axis=(2, 4))


def load_mnist(images_path: str | Path, labels_path: str | Path, pooling: int = 4,
               classes=None, name: str = "mnist", split: str = "") -> Dataset:
    """IDX images and labels as a pooled, [0, 1]-scaled dataset.

    ``classes`` keeps only those digits and relabels them ``0..len-1`` in
    sorted order.
    """
    if pooling < 1 or MNIST_SIDE % pooling:
        raise DataError(f"pooling {pooling} does not divide {MNIST_SIDE}")
    images = read_idx(images_path, IMAGE_MAGIC)
    labels = read_idx(labels_path, LABEL_MAGIC)
    if images.ndim != 3 or labels.ndim != 1:
        raise DataError("expected 3-d images and 1-d labels")
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    labels = labels.astype(int)
    n_classes = 10
    if classes is not None:
        keep = sorted(int(c) for c in classes)
        mask = np.isin(labels, keep)
        images, labels = images[mask], np.searchsorted(keep, labels[mask])
        n_classes = len(keep)
    pooled = average_pool(images.astype(float) / 255.0, pooling)
    return Dataset(pooled.reshape(len(pooled), -1), labels, n_classes, name, split)


def mnist_paths(directory: str | Path, split: str) -> tuple[Path, Path]:
    """Standard MNIST file names in ``directory`` (plain or ``.gz``)."""
    directory = Path(directory)
    out = []
    for stem in MNIST_FILES[split]:
        for candidate in (directory / stem, directory / f"{stem}.gz"):
            if candidate.exists():
                out.append(candidate)
                break
        else:
            raise DataError(f"missing {stem} in {directory}")
    return out[0], out[1]


def export_idx(images: np.ndarray, labels: np.ndarray, directory: str | Path, split: str) -> tuple[Path, Path]:
    """Write ``images``/``labels`` under the standard file names for ``split``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    img_path, lbl_path = (directory / stem for stem in MNIST_FILES[split])
    write_idx(img_path, np.asarray(images, dtype=np.uint8))
    write_idx(lbl_path, np.asarray(labels, dtype=np.uint8))
    return img_path, lbl_path


def blob_centers(n_classes: int, dims: int) -> np.ndarray:
    """Fixed, seed-independent class centers two units from the origin."""
    if dims < 1:
        raise DataError("blobs need at least one dimension")
    if dims == 1:
        return np.linspace(-2, 2, n_classes)[:, None]
    angle = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, dims))
    centers[:, 0], centers[:, 1] = 2 * np.cos(angle), 2 * np.sin(angle)
    return centers


def make_blobs(n_per_class: int, n_classes: int = 2, dims: int = 2, spread: float = 0.3,
               seed: int = 0, split: str = "") -> Dataset:
    """Balanced Gaussian clusters around ``blob_centers``; samples grouped by class."""
    if n_per_class < 1 or n_classes < 2:
        raise DataError("need at least one sample per class and two classes")
    if spread < 0:
        raise DataError("spread must be non-negative")
    centers = blob_centers(n_classes, dims)
    rng = np.random.default_rng(seed)
    x = np.repeat(centers, n_per_class, axis=0) + spread * rng.standard_normal((n_classes * n_per_class, dims))
    y = np.repeat(np.arange(n_classes), n_per_class)
    return Dataset(x, y, n_classes, "blobs", split)


def stratified_split(data: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Class-balanced train/test split."""
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for c in range(data.n_classes):
        idx = rng.permutation(np.flatnonzero(data.labels == c))
        cut = int(round(len(idx) * test_fraction))
        test_idx.append(idx[:cut])
        train_idx.append(idx[cut:])
    tr, te = np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))
    return (
        Dataset(data.features[tr], data.labels[tr], data.n_classes, data.name, "train"),
        Dataset(data.features[te], data.labels[te], data.n_classes, data.name, "test"),
    )
