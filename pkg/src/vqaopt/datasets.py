"""Classification datasets: seeded synthetic clusters and MNIST IDX files."""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import BinaryIO, Dict, Iterator, Sequence, Tuple, Union

import numpy as np

from .constants import IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, MNIST_CLASSES
from .errors import ConfigError, IdxFormatError, InsufficientDataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

BINARY_CENTERS = ((-1.0, -1.0), (1.0, 1.0))
BINARY_STD = 0.5
# Raw features in [-2.5, 2.5] map linearly onto [pi, 0], so the (+1, +1) cluster
# lands near angle 0 where RY leaves |0> almost untouched; outliers are clipped.
FEATURE_RANGE = (-2.5, 2.5)
GZIP_MAGIC = b"\x1f\x8b"


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


@dataclass(eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: Split
    classes: Tuple[int, ...] = (0, 1)

    def __post_init__(self) -> None:
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConfigError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels"
            )
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features must be finite")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def class_counts(self) -> Dict[int, int]:
        return {c: int(np.sum(self.labels == c)) for c in self.classes}

    def one_hot(self) -> np.ndarray:
        """Rows y_{l,p} in {0, 1}, column p for ``classes[p]``."""
        index = {c: k for k, c in enumerate(self.classes)}
        targets = np.zeros((len(self), len(self.classes)))
        for row, label in enumerate(self.labels):
            targets[row, index[int(label)]] = 1.0
        return targets

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=int)
        return Dataset(self.features[rows], self.labels[rows], self.split, self.classes)


def minibatch_indices(
    n_examples: int, batch_size: int, rng: np.random.Generator
) -> Iterator[np.ndarray]:
    """Endless stream of batches; reshuffles after every full pass."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    batch_size = min(batch_size, n_examples)
    while True:
        order = rng.permutation(n_examples)
        for start in range(0, n_examples - batch_size + 1, batch_size):
            yield order[start:start + batch_size]


def _scale_to_angles(raw: np.ndarray) -> np.ndarray:
    lo, hi = FEATURE_RANGE
    return np.clip((hi - raw) / (hi - lo), 0.0, 1.0) * np.pi


def _draw_balanced(n: int, rng: np.random.Generator, split: Split) -> Dataset:
    per_class = n // 2
    features = []
    labels = []
    for label, center in enumerate(BINARY_CENTERS):
        features.append(rng.normal(loc=center, scale=BINARY_STD, size=(per_class, 2)))
        labels.append(np.full(per_class, label))
    order = rng.permutation(n)
    raw = np.concatenate(features)[order]
    return Dataset(_scale_to_angles(raw), np.concatenate(labels)[order], split)


def generate_binary_dataset(n_train: int, n_test: int, seed: int) -> Tuple[Dataset, Dataset]:
    """Two isotropic Gaussian clusters at (-1, -1) and (+1, +1), std 0.5.

    Features are mapped into [0, pi]^2 for angle encoding, decreasing in the
    raw value. Train and test are successive draws from one seeded
    generator, balanced per class.
    """
    for name, n in (("n_train", n_train), ("n_test", n_test)):
        if n < 2 or n % 2:
            raise ConfigError(f"{name} must be even and >= 2, got {n}", name)
    rng = np.random.default_rng(seed)
    train = _draw_balanced(n_train, rng, Split.TRAIN)
    test = _draw_balanced(n_test, rng, Split.TEST)
    return train, test


def _open_idx(path: PathLike) -> BinaryIO:
    path = Path(path)
    with path.open("rb") as handle:
        head = handle.read(2)
    if head == GZIP_MAGIC:
        return gzip.open(path, "rb")
    return path.open("rb")


def _read_header(raw: bytes, path: PathLike, magic: int, n_dims: int) -> Tuple[int, ...]:
    size = 4 * (1 + n_dims)
    if len(raw) < size:
        raise IdxFormatError(f"{path}: truncated IDX header")
    found, *dims = struct.unpack(f">{1 + n_dims}I", raw[:size])
    if found != magic:
        raise IdxFormatError(f"{path}: bad magic number 0x{found:08x}, expected 0x{magic:08x}")
    expected = int(np.prod(dims))
    if len(raw) - size != expected:
        raise IdxFormatError(
            f"{path}: expected {expected} data bytes, found {len(raw) - size}"
        )
    return tuple(dims)


def read_idx_images(path: PathLike) -> np.ndarray:
    """uint8 array (count, rows, cols); gzip-compressed files are accepted."""
    with _open_idx(path) as handle:
        raw = handle.read()
    count, rows, cols = _read_header(raw, path, IDX_IMAGES_MAGIC, 3)
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: PathLike) -> np.ndarray:
    with _open_idx(path) as handle:
        raw = handle.read()
    (count,) = _read_header(raw, path, IDX_LABELS_MAGIC, 1)
    return np.frombuffer(raw, dtype=np.uint8, offset=8).reshape(count)


def write_idx_images(path: PathLike, images: np.ndarray) -> None:
    images = np.asarray(images)
    if images.ndim != 3:
        raise IdxFormatError(f"images must be (count, rows, cols), got shape {images.shape}")
    header = struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape)
    Path(path).write_bytes(header + images.astype(np.uint8).tobytes())


def write_idx_labels(path: PathLike, labels: np.ndarray) -> None:
    labels = np.asarray(labels).reshape(-1)
    header = struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0])
    Path(path).write_bytes(header + labels.astype(np.uint8).tobytes())


def load_mnist_subset(
    images_path: PathLike,
    labels_path: PathLike,
    classes: Sequence[int] = MNIST_CLASSES,
    per_class: int = 1000,
    seed: int = 0,
    split: Split = Split.TRAIN,
) -> Dataset:
    """Balanced subset of the given digits as flattened [0, 1] pixel vectors.

    The file order is shuffled with ``seed``; the first ``per_class`` examples
    of each class in that order are kept.
    """
    if per_class < 1:
        raise ConfigError(f"per_class must be >= 1, got {per_class}", "per_class")
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels in {images_path}"
        )
    order = np.random.default_rng(seed).permutation(labels.shape[0])
    keep = np.zeros(labels.shape[0], dtype=bool)
    for c in classes:
        rows = order[labels[order] == c]
        if rows.shape[0] < per_class:
            raise InsufficientDataError(
                f"class {c}: requested {per_class} examples, only {rows.shape[0]} available"
            )
        keep[rows[:per_class]] = True
    selected = order[keep[order]]
    features = images[selected].reshape(selected.shape[0], -1).astype(float) / 255.0
    logger.info("Loaded %d MNIST examples from %s", selected.shape[0], images_path)
    return Dataset(features, labels[selected].astype(int), split, tuple(int(c) for c in classes))
