"""Datasets: IDX files and a synthetic frequency-class generator."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .dct import build_plan, idct2d_array

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801

# canonical file names inside a data directory; a .gz suffix is also accepted
SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    pass


@dataclass
class Dataset:
    images: np.ndarray   # [N, C, H, W], uint8 or float32
    labels: np.ndarray   # [N] int64
    split: str = "train"
    num_classes: Optional[int] = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be [N,C,H,W], got dims {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images vs {len(self.labels)} labels")
        if self.num_classes is None:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.images[idx], self.labels[idx], self.split, self.num_classes)


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path, expect_magic: Optional[int] = None) -> np.ndarray:
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic >> 16 != 0 or (magic >> 8) & 0xFF != 0x08:
        raise IdxFormatError(f"{path}: bad IDX magic 0x{magic:08x} (only unsigned-byte data is supported)")
    if expect_magic is not None and magic != expect_magic:
        raise IdxFormatError(f"{path}: IDX magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxFormatError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:head])
    count = int(np.prod(dims))
    if len(raw) - head != count:
        raise IdxFormatError(f"{path}: payload has {len(raw) - head} bytes, dims {dims} need {count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=head).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    data = header + array.tobytes()
    if str(path).endswith(".gz"):
        with gzip.open(path, "wb") as fh:
            fh.write(data)
    else:
        with open(path, "wb") as fh:
            fh.write(data)


def load_idx(images_path, labels_path, split: str = "train", num_classes: Optional[int] = None) -> Dataset:
    """Parse an IDX image/label pair; grayscale is replicated to 3 channels."""
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if len(images) != len(labels):
        raise IdxFormatError(f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    images = np.repeat(images[:, None], 3, axis=1)
    return Dataset(images, labels.astype(np.int64), split, num_classes)


def _find(data_dir: Path, name: str) -> Path:
    for cand in (data_dir / name, data_dir / (name + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"{name}[.gz] not found in {data_dir}")


def load_idx_dir(data_dir, split: str, num_classes: Optional[int] = None) -> Dataset:
    data_dir = Path(data_dir)
    img, lab = SPLIT_FILES[split]
    return load_idx(_find(data_dir, img), _find(data_dir, lab), split, num_classes)


def write_idx_dir(data_dir, train: Dataset, test: Dataset) -> None:
    os.makedirs(data_dir, exist_ok=True)
    for ds, split in ((train, "train"), (test, "test")):
        img, lab = SPLIT_FILES[split]
        write_idx(Path(data_dir) / img, ds.images[:, 0])
        write_idx(Path(data_dir) / lab, ds.labels)


def class_frequency(c: int) -> tuple[int, int]:
    return c % 4, c // 4


def synth_dataset(classes: int, n: int, extent: int = 32, seed: int = 0, noise: float = 0.3,
                  split: str = "train", channels: int = 3) -> Dataset:
    """Images whose class is the dominant 2D cosine frequency.

    Class ``c`` carries a DCT basis image at index ``(c mod 4, c div 4)``
    (scaled to unit peak, random positive amplitude per channel) plus
    Gaussian noise of standard deviation ``noise``.
    """
    if not 1 <= classes <= 16:
        raise ValueError(f"synthetic dataset supports 1..16 classes, got {classes}")
    rng = np.random.default_rng(seed)
    plan = build_plan(extent, extent)
    bases = np.empty((classes, extent, extent))
    for c in range(classes):
        coeffs = np.zeros((extent, extent))
        coeffs[class_frequency(c)] = 1.0
        b = idct2d_array(plan, coeffs)
        bases[c] = b / np.abs(b).max()
    labels = rng.integers(0, classes, size=n)
    amps = rng.uniform(0.5, 1.5, size=(n, channels))
    images = amps[:, :, None, None] * bases[labels][:, None]
    if noise > 0:
        images = images + rng.normal(0.0, noise, size=images.shape)
    return Dataset(images.astype(np.float32), labels, split, classes)


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray  # [C]
    std: np.ndarray   # [C]

    @classmethod
    def fit(cls, ds: Dataset) -> "Normalizer":
        x = ds.images.astype(np.float64)
        mean = x.mean(axis=(0, 2, 3))
        std = x.std(axis=(0, 2, 3))
        return cls(mean, np.where(std > 0, std, 1.0))

    def __call__(self, images: np.ndarray, dtype=np.float32) -> np.ndarray:
        x = images.astype(np.float64)
        x = (x - self.mean[None, :, None, None]) / self.std[None, :, None, None]
        return x.astype(dtype)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_extent(images: np.ndarray, extent: int) -> np.ndarray:
    """Centre zero-pad (or centre crop) square images to ``extent``."""
    H, W = images.shape[2], images.shape[3]
    out = images
    if H < extent or W < extent:
        ph, pw = max(extent - H, 0), max(extent - W, 0)
        out = np.pad(out, ((0, 0), (0, 0), (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)))
    H, W = out.shape[2], out.shape[3]
    top, left = (H - extent) // 2, (W - extent) // 2
    return out[:, :, top:top + extent, left:left + extent]


def bundled_digits(test_per_class: int = 100, seed: int = 0) -> tuple[Dataset, Dataset]:
    """The 5000-image MNIST subset shipped with mlxtend, split per class.

    Used when the full MNIST IDX files are not at hand; needs the optional
    ``mlxtend`` dependency.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise ImportError("bundled digits need mlxtend (pip install 'artifact[digits]')") from exc
    X, y = mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    y = y.astype(np.int64)
    rng = np.random.default_rng(seed)
    test_idx = np.concatenate([rng.permutation(np.flatnonzero(y == c))[:test_per_class] for c in range(10)])
    test_mask = np.zeros(len(y), dtype=bool)
    test_mask[test_idx] = True
    rgb = np.repeat(images[:, None], 3, axis=1)
    train = Dataset(rgb[~test_mask], y[~test_mask], "train", 10)
    test = Dataset(rgb[test_mask], y[test_mask], "test", 10)
    return train, test


def digits_idx_dir(data_dir) -> Path:
    """Write the bundled digit split as IDX files (skipped if already present)."""
    data_dir = Path(data_dir)
    if not all((data_dir / f).exists() for pair in SPLIT_FILES.values() for f in pair):
        train, test = bundled_digits()
        write_idx_dir(data_dir, train, test)
    return data_dir
