"""Dataset ingestion, batching, and PNG sample grids.

Supports the MNIST IDX binary format, the CIFAR-10 binary format, and a
generic image folder. Loaders are pure functions of the file bytes and
always produce images as float64 [n, C, H, W] scaled to [0, 1].
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ContractError, FormatError

__all__ = [
    "Dataset",
    "load_mnist_idx",
    "load_idx_labels",
    "write_mnist_idx",
    "write_idx_labels",
    "load_cifar10",
    "load_image_folder",
    "iterate_batches",
    "save_png_grid",
    "ensure_digits_idx",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Images [n, C, H, W] in [0, 1] plus provenance."""

    images: np.ndarray
    name: str = "dataset"
    split: str = "train"
    labels: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 4 or self.images.shape[0] == 0:
            raise ContractError(
                f"dataset images must be a non-empty [n, C, H, W] array, got {self.images.shape}"
            )
        lo, hi = float(self.images.min()), float(self.images.max())
        if lo < 0.0 or hi > 1.0:
            raise ContractError(f"pixel values must lie in [0, 1], got range [{lo}, {hi}]")

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, n: int) -> "Dataset":
        if n < 1 or n > len(self):
            raise ContractError(f"subset size {n} out of range 1..{len(self)}")
        labels = None if self.labels is None else self.labels[:n]
        return Dataset(self.images[:n], self.name, self.split, labels)


# ---------------------------------------------------------------------------
# MNIST IDX


def _read_exact(fh, n, path, what):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(
            f"{path}: truncated while reading {what} at byte {fh.tell() - len(data)}, "
            f"wanted {n} bytes, got {len(data)}"
        )
    return data


def load_mnist_idx(images_path, labels_path=None, name="mnist", split="train") -> Dataset:
    """Parse big-endian IDX image (and optional label) files.

    Expects magic 0x00000803 / dims [n, rows, cols]; pixels are scaled by
    1/255. Format violations raise FormatError with the byte offset.
    """
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, images_path, "header"))
        if magic != IDX_IMAGES_MAGIC:
            raise FormatError(
                f"{images_path}: bad IDX magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}"
            )
        raw = _read_exact(fh, n * rows * cols, images_path, f"{n} images")
        if fh.read(1):
            raise FormatError(f"{images_path}: trailing bytes after {n} images")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, 1, rows, cols)
    labels = None
    if labels_path is not None:
        labels = load_idx_labels(labels_path)
        if labels.shape[0] != n:
            raise FormatError(
                f"{labels_path}: {labels.shape[0]} labels for {n} images"
            )
    return Dataset(images.astype(np.float64) / 255.0, name, split, labels)


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", _read_exact(fh, 8, path, "header"))
        if magic != IDX_LABELS_MAGIC:
            raise FormatError(
                f"{path}: bad IDX magic 0x{magic:08x} at byte 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}"
            )
        raw = _read_exact(fh, n, path, f"{n} labels")
    return np.frombuffer(raw, dtype=np.uint8).copy()


def write_mnist_idx(images_u8: np.ndarray, path):
    """Write uint8 images [n, rows, cols] in the IDX format (fixture helper)."""
    images_u8 = np.asarray(images_u8)
    if images_u8.dtype != np.uint8 or images_u8.ndim != 3:
        raise ContractError(
            f"expected uint8 [n, rows, cols], got {images_u8.dtype} {images_u8.shape}"
        )
    n, rows, cols = images_u8.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images_u8.tobytes())


def write_idx_labels(labels_u8: np.ndarray, path):
    labels_u8 = np.asarray(labels_u8)
    if labels_u8.dtype != np.uint8 or labels_u8.ndim != 1:
        raise ContractError(f"expected uint8 [n], got {labels_u8.dtype} {labels_u8.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels_u8.shape[0]))
        fh.write(labels_u8.tobytes())


# ---------------------------------------------------------------------------
# CIFAR-10 binary

_CIFAR_RECORD = 3073  # 1 label byte + 3 * 1024 pixel bytes
_CIFAR_TRAIN = [f"data_batch_{i}.bin" for i in range(1, 6)]
_CIFAR_TEST = ["test_batch.bin"]


def load_cifar10(directory, split="train") -> Dataset:
    """Read the CIFAR-10 binary batches from `directory`.

    Each record is one label byte followed by 3072 pixel bytes in R, G, B
    planes; output is [n, 3, 32, 32] scaled by 1/255.
    """
    names = _CIFAR_TRAIN if split == "train" else _CIFAR_TEST
    chunks, labels = [], []
    for fname in names:
        path = os.path.join(directory, fname)
        if not os.path.exists(path):
            raise FormatError(f"missing CIFAR-10 batch file {path}")
        with open(path, "rb") as fh:
            raw = fh.read()
        if len(raw) == 0 or len(raw) % _CIFAR_RECORD != 0:
            raise FormatError(
                f"{path}: length {len(raw)} is not a positive multiple of "
                f"{_CIFAR_RECORD}-byte records (expected e.g. {len(raw) // _CIFAR_RECORD * _CIFAR_RECORD} "
                f"or {(len(raw) // _CIFAR_RECORD + 1) * _CIFAR_RECORD})"
            )
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        labels.append(rec[:, 0].copy())
        chunks.append(rec[:, 1:].reshape(-1, 3, 32, 32))
    images = np.concatenate(chunks, axis=0).astype(np.float64) / 255.0
    return Dataset(images, "cifar10", split, np.concatenate(labels))


# ---------------------------------------------------------------------------
# generic image folder (center-crop + bilinear resize; CelebA-style analog)


def load_image_folder(directory, size=64, limit=None, name="folder", split="train") -> Dataset:
    paths = sorted(
        os.path.join(directory, f)
        for f in os.listdir(directory)
        if f.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
    )
    if limit is not None:
        paths = paths[:limit]
    if not paths:
        raise FormatError(f"no images found in {directory}")
    out = np.empty((len(paths), 3, size, size))
    for i, p in enumerate(paths):
        img = Image.open(p).convert("RGB")
        w, h = img.size
        side = min(w, h)
        left, top = (w - side) // 2, (h - side) // 2
        img = img.crop((left, top, left + side, top + side)).resize(
            (size, size), Image.BILINEAR
        )
        out[i] = np.asarray(img, dtype=np.float64).transpose(2, 0, 1) / 255.0
    return Dataset(out, name, split)


# ---------------------------------------------------------------------------
# batching


def epoch_permutation(n, seed, epoch) -> np.ndarray:
    """Permutation of range(n) as a pure function of (seed, epoch)."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(epoch)])
    return rng.permutation(n)


def iterate_batches(dataset: Dataset, batch_size, seed, epoch, drop_last=True):
    """Yield image batches for one epoch under a seeded shuffle.

    One epoch visits every index exactly once before any drop of the
    incomplete tail; training drops the tail, evaluation keeps it.
    """
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    perm = epoch_permutation(len(dataset), seed, epoch)
    n = len(dataset)
    stop = (n // batch_size) * batch_size if drop_last else n
    for start in range(0, stop, batch_size):
        idx = perm[start : start + batch_size]
        yield dataset.images[idx]


# ---------------------------------------------------------------------------
# PNG sample grids


def save_png_grid(images, rows, path, separator=2):
    """Tile images row-major into one 8-bit PNG with `separator`-px gaps.

    Grayscale for C=1, RGB for C=3. Values outside [0, 1] are rejected
    rather than clamped.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ContractError(f"expected [k, C, H, W], got shape {images.shape}")
    k, c, h, w = images.shape
    if c not in (1, 3):
        raise ContractError(f"only 1- or 3-channel images supported, got C={c}")
    if rows < 1:
        raise ContractError(f"rows must be >= 1, got {rows}")
    lo, hi = float(images.min()), float(images.max())
    if lo < 0.0 or hi > 1.0:
        raise ContractError(
            f"pixel values must lie in [0, 1] (no clamping), got range [{lo}, {hi}]"
        )
    cols = (k + rows - 1) // rows
    if k > rows * cols:
        raise ContractError(f"{k} images do not fit a {rows}x{cols} grid")
    canvas = np.zeros(
        (c, rows * h + (rows - 1) * separator, cols * w + (cols - 1) * separator)
    )
    for i in range(k):
        r, cc = divmod(i, cols)
        y, x = r * (h + separator), cc * (w + separator)
        canvas[:, y : y + h, x : x + w] = images[i]
    pixels = np.round(canvas * 255.0).astype(np.uint8)
    if c == 1:
        img = Image.fromarray(pixels[0], mode="L")
    else:
        img = Image.fromarray(pixels.transpose(1, 2, 0), mode="RGB")
    img.save(path, format="PNG")


# ---------------------------------------------------------------------------
# offline digit fixture
#
# Real MNIST files are loaded when present; for fully offline desk-scale runs
# this writes an IDX-format stand-in built from scikit-learn's bundled 8x8
# handwritten digits, upscaled to 28x28 with small deterministic shifts for
# augmentation. The files round-trip through the same IDX reader as MNIST.

_DIGITS_FILES = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)


def ensure_digits_idx(directory, n_train=2400, n_test=600, seed=0):
    """Create (once) and return paths of the IDX digit fixture in `directory`."""
    os.makedirs(directory, exist_ok=True)
    paths = [os.path.join(directory, f) for f in _DIGITS_FILES]
    if all(os.path.exists(p) for p in paths):
        return paths
    from sklearn.datasets import load_digits

    base = load_digits()
    imgs8 = base.images / 16.0  # [1797, 8, 8] in [0, 1]
    labels = base.target.astype(np.uint8)
    rng = np.random.default_rng(seed)
    need = n_train + n_test
    big = np.kron(imgs8, np.ones((1, 4, 4)))[:, 2:30, 2:30]  # 32x32 -> center 28x28
    pool_imgs, pool_labels = [big], [labels]
    while sum(a.shape[0] for a in pool_imgs) < need:
        dy, dx = rng.integers(-2, 3, size=2)
        shifted = np.roll(np.roll(big, dy, axis=1), dx, axis=2)
        pool_imgs.append(shifted)
        pool_labels.append(labels)
    allimgs = np.concatenate(pool_imgs)[:need]
    alllabels = np.concatenate(pool_labels)[:need]
    order = rng.permutation(need)
    allimgs, alllabels = allimgs[order], alllabels[order]
    as_u8 = np.round(allimgs * 255.0).astype(np.uint8)
    write_mnist_idx(as_u8[:n_train], paths[0])
    write_idx_labels(alllabels[:n_train], paths[1])
    write_mnist_idx(as_u8[n_train:], paths[2])
    write_idx_labels(alllabels[n_train:], paths[3])
    return paths
