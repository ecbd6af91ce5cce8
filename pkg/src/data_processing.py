"""Dataset loading, synthesis, augmentation and batching."""

import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import (
    CIFAR10_CLASSES,
    CIFAR10_RECORD_BYTES,
    CIFAR10_SHAPE,
    CIFAR10_TEST_FILE,
    CIFAR10_TRAIN_FILES,
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    MNIST_FILES,
)
from .models import ConfigurationError, ContractError, DataFormatError, DatasetSummary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Labelled images held in memory.

    Attributes
    ----------
    images : numpy.ndarray
        N×C×H×W float64 array; loaded pixels are scaled to [0, 1]
    labels : numpy.ndarray
        N int64 class indices
    num_classes : int
        Number of classes; every label lies in [0, num_classes)
    split : str
        ``train``, ``val`` or ``test``
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"

    def __post_init__(self) -> None:
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim != 4:
            raise ContractError(f"images must be N x C x H x W, got {list(images.shape)}")
        if images.shape[0] != labels.shape[0] or labels.ndim != 1:
            raise ContractError(
                f"{images.shape[0]} images but {labels.shape[0]} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ContractError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got [{labels.min()}, {labels.max()}]"
            )
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def select(self, indices: Union[slice, np.ndarray], split: Optional[str] = None) -> "Dataset":
        """Subset by index, optionally retagging the split."""
        return Dataset(
            self.images[indices], self.labels[indices], self.num_classes, split or self.split
        )


@dataclass(frozen=True)
class BatchPlan:
    """
    How an epoch is cut into batches.

    Attributes
    ----------
    batch_size : int
        Samples per batch
    seed : int
        Base seed of the per-epoch shuffle
    drop_last : bool
        Discard a final partial batch
    shuffle : bool
        Permute samples each epoch
    """

    batch_size: int
    seed: int = 0
    drop_last: bool = False
    shuffle: bool = True

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")


def _read_bytes(path: PathLike) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as handle:
            return handle.read()
    return path.read_bytes()


def _parse_idx(raw: bytes, expected_magic: int, path: PathLike) -> np.ndarray:
    if len(raw) < 4:
        raise DataFormatError(f"{path}: file too short for an IDX header ({len(raw)} bytes)")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise DataFormatError(
            f"{path}: expected magic {expected_magic:#010x}, found bytes {raw[:4].hex(' ')}"
        )
    ndim = raw[3]
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX header ({len(raw)} bytes)")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise DataFormatError(
            f"{path}: truncated; header promises {count} values, found {len(raw) - header}"
        )
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def load_idx(
    images_path: PathLike,
    labels_path: PathLike,
    num_classes: int = 10,
    split: str = "train",
) -> Dataset:
    """
    Load an IDX image/label pair (MNIST layout, optionally gzipped).

    Parameters
    ----------
    images_path : path
        File with magic 0x00000803 and dims N, rows, cols
    labels_path : path
        File with magic 0x00000801 and dim N
    num_classes : int
        Number of label classes
    split : str
        Split tag of the result

    Returns
    -------
    Dataset
        Images shaped N×1×rows×cols, pixels divided by 255

    Raises
    ------
    DataFormatError
        On a wrong magic number, truncated file or count mismatch
    """
    pixels = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, labels_path)
    if pixels.ndim != 3 or labels.ndim != 1:
        raise DataFormatError(
            f"expected 3-D images and 1-D labels, got {pixels.ndim}-D and {labels.ndim}-D"
        )
    if pixels.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{images_path} holds {pixels.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels"
        )
    images = pixels[:, None, :, :].astype(np.float64) / 255.0
    logger.info("loaded %d IDX images of %dx%d", *pixels.shape)
    return Dataset(images, labels.astype(np.int64), num_classes, split)


def write_idx(dataset: Dataset, images_path: PathLike, labels_path: PathLike) -> None:
    """Write a single-channel dataset as an IDX pair, quantizing pixels to bytes."""
    if dataset.images.shape[1] != 1:
        raise ContractError(f"IDX holds single-channel images, got {dataset.sample_shape}")
    n, _, rows, cols = dataset.images.shape
    pixels = np.clip(np.rint(dataset.images[:, 0] * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    )
    Path(labels_path).write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    )


def load_cifar10_bin(paths: Sequence[PathLike], split: str = "train") -> Dataset:
    """
    Load CIFAR-10 binary batches.

    Each 3073-byte record is one label byte followed by 1024 red, 1024 green
    and 1024 blue pixel bytes of a 32×32 image.

    Raises
    ------
    DataFormatError
        If a file is not a whole number of records or a label is >= 10
    """
    images: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    for path in paths:
        raw = _read_bytes(path)
        if len(raw) % CIFAR10_RECORD_BYTES:
            raise DataFormatError(
                f"{path}: {len(raw)} bytes is not a multiple of the "
                f"{CIFAR10_RECORD_BYTES}-byte record size"
            )
        records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR10_RECORD_BYTES)
        if records.size and records[:, 0].max() >= CIFAR10_CLASSES:
            bad = int(np.argmax(records[:, 0] >= CIFAR10_CLASSES))
            raise DataFormatError(
                f"{path}: record {bad} has label byte {records[bad, 0]}, "
                f"expected < {CIFAR10_CLASSES}"
            )
        labels.append(records[:, 0].astype(np.int64))
        images.append(records[:, 1:].reshape((-1,) + CIFAR10_SHAPE).astype(np.float64) / 255.0)
    if not images:
        raise ConfigurationError("no CIFAR-10 files given")
    dataset = Dataset(np.concatenate(images), np.concatenate(labels), CIFAR10_CLASSES, split)
    logger.info("loaded %d CIFAR-10 images from %d files", len(dataset), len(images))
    return dataset


def synth_blobs(
    n: int,
    d: int,
    k: int,
    seed: int,
    sigma: float = 1.0,
    separation: float = 8.0,
) -> Dataset:
    """
    Gaussian clusters on a grid of spacing ``separation * sigma``.

    Cluster means are pairwise at least ``separation`` standard deviations
    apart. Labels cycle through the clusters so every class appears when
    ``n >= k``; images are shaped N×d×1×1.

    Raises
    ------
    ConfigurationError
        Unless ``n >= k >= 2`` and ``d >= 1``
    """
    if not n >= k >= 2 or d < 1:
        raise ConfigurationError(f"synth_blobs needs n >= k >= 2 and d >= 1, got {n}, {k}, {d}")
    rng = np.random.default_rng(seed)
    side = 1
    while side**d < k:
        side += 1
    grid = np.array([np.unravel_index(i, (side,) * d) for i in range(k)], dtype=np.float64)
    means = grid * separation * sigma + rng.normal(size=d)
    labels = rng.permutation(np.arange(n) % k)
    points = means[labels] + sigma * rng.standard_normal((n, d))
    return Dataset(points.reshape(n, d, 1, 1), labels, k, "train")


def augment_hflip(
    images: np.ndarray, p: float, rng: np.random.Generator
) -> np.ndarray:
    """Mirror each N×C×H×W image across its vertical axis with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"flip probability must lie in [0, 1], got {p}")
    flip = rng.random(images.shape[0]) < p
    out = np.array(images, dtype=np.float64)
    out[flip] = out[flip][..., ::-1]
    return out


def batches(
    dataset: Dataset, plan: BatchPlan, epoch: int
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yield ``(images, labels)`` batches for one epoch.

    The order is a permutation keyed by ``(plan.seed, epoch)``.
    """
    n = len(dataset)
    if plan.shuffle:
        order = np.random.default_rng([plan.seed, epoch]).permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, plan.batch_size):
        index = order[start : start + plan.batch_size]
        if plan.drop_last and index.size < plan.batch_size:
            break
        yield dataset.images[index], dataset.labels[index]


def batch_count(dataset: Dataset, plan: BatchPlan) -> int:
    full, rest = divmod(len(dataset), plan.batch_size)
    return full if plan.drop_last or not rest else full + 1


def split_validation(dataset: Dataset, fraction: float) -> Tuple[Dataset, Dataset]:
    """Hold out the last ``fraction`` of ``dataset`` (original order) for validation."""
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"validation fraction must lie in (0, 1), got {fraction}")
    n_val = int(round(len(dataset) * fraction))
    if not 0 < n_val < len(dataset):
        raise ConfigurationError(
            f"validation fraction {fraction} of {len(dataset)} samples leaves an empty split"
        )
    cut = len(dataset) - n_val
    return dataset.select(slice(0, cut), "train"), dataset.select(slice(cut, None), "val")


def summarize(dataset: Dataset) -> DatasetSummary:
    """Shape, pixel statistics and class balance of ``dataset``."""
    counts = pd.Series(dataset.labels).value_counts().sort_index()
    return {
        "split": dataset.split,
        "num_samples": len(dataset),
        "shape": list(dataset.images.shape),
        "num_classes": dataset.num_classes,
        "pixel_min": float(dataset.images.min()) if len(dataset) else 0.0,
        "pixel_max": float(dataset.images.max()) if len(dataset) else 0.0,
        "pixel_mean": float(dataset.images.mean()) if len(dataset) else 0.0,
        "label_counts": {int(k): int(v) for k, v in counts.items()},
    }


def _mnist_pair(root: Path, prefix: str) -> Optional[Tuple[Path, Path]]:
    for suffix in ("", ".gz"):
        images = root / (MNIST_FILES[f"{prefix}_images"] + suffix)
        labels = root / (MNIST_FILES[f"{prefix}_labels"] + suffix)
        if images.exists() and labels.exists():
            return images, labels
    return None


def find_mnist(root: PathLike) -> Dict[str, Tuple[Path, Path]]:
    """Locate the standard MNIST IDX files under ``root``."""
    found = {}
    for split, prefix in (("train", "train"), ("test", "test")):
        pair = _mnist_pair(Path(root), prefix)
        if pair is not None:
            found[split] = pair
    return found


def load_path(path: PathLike) -> Dict[str, Dataset]:
    """
    Load whatever dataset lives at ``path``.

    Accepts an MNIST or CIFAR-10 directory, a CIFAR-10 ``.bin`` file, or an
    IDX images file whose label file sits next to it under the standard name.

    Raises
    ------
    FileNotFoundError
        If nothing loadable is found
    """
    path = Path(path)
    if path.is_dir():
        mnist = find_mnist(path)
        if mnist:
            return {split: load_idx(*pair, split=split) for split, pair in mnist.items()}
        train = [path / name for name in CIFAR10_TRAIN_FILES if (path / name).exists()]
        loaded = {}
        if train:
            loaded["train"] = load_cifar10_bin(train, "train")
        if (path / CIFAR10_TEST_FILE).exists():
            loaded["test"] = load_cifar10_bin([path / CIFAR10_TEST_FILE], "test")
        if loaded:
            return loaded
        raise FileNotFoundError(f"no MNIST or CIFAR-10 files under {path}")
    if not path.exists():
        raise FileNotFoundError(f"{path} does not exist")
    if path.suffix == ".bin":
        return {"train": load_cifar10_bin([path])}
    labels = path.with_name(path.name.replace("images-idx3", "labels-idx1"))
    if labels == path or not labels.exists():
        raise FileNotFoundError(f"no label file found next to {path} (looked for {labels.name})")
    return {"train": load_idx(path, labels)}
