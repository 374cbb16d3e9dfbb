"""Datasets: a seeded procedural synthetic set and the CIFAR-10 binary loader.

The synthetic set is the default desk-scale workload: each class is an
oriented sinusoidal stripe pattern (class-specific frequency, orientation
and phase) plus Gaussian pixel noise, so a tiny CNN can separate classes in
a few dozen epochs. CIFAR-10 ingestion reads the canonical binary batches
(3073-byte records: 1 label byte + 3072 channel-major pixel bytes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CIFAR_RECORD_BYTES = 3073
CIFAR_IMAGE_SHAPE = (3, 32, 32)


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    eval_x: np.ndarray
    eval_y: np.ndarray
    num_classes: int
    metadata: dict = field(default_factory=dict)


def _stripe_images(
    labels: np.ndarray, classes: int, size: int, rng: np.random.Generator
) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = np.empty((len(labels), 1, size, size))
    for i, c in enumerate(labels):
        freq = 1.0 + (c % (classes // 2 or 1))
        theta = 0.0 if c < classes / 2 else math.pi / 2
        phase = 0.9 * c
        u = xx * math.cos(theta) + yy * math.sin(theta)
        pattern = np.sin(2 * math.pi * freq * u / size + phase)
        images[i, 0] = pattern + rng.normal(0.0, 0.1, size=(size, size))
    return images


def gen_synthetic_dataset(
    seed: int,
    n_train: int,
    n_eval: int,
    classes: int = 10,
    image_size: int = 16,
) -> Dataset:
    """Balanced, deterministic stripe-pattern dataset (noise sigma = 0.1)."""
    if classes < 2:
        raise ValueError(f"need >= 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    train_y = np.arange(n_train) % classes
    eval_y = np.arange(n_eval) % classes
    train_x = _stripe_images(train_y, classes, image_size, rng)
    eval_x = _stripe_images(eval_y, classes, image_size, rng)
    # shuffle train order deterministically so minibatches mix classes
    order = rng.permutation(n_train)
    return Dataset(
        train_x=train_x[order],
        train_y=train_y[order],
        eval_x=eval_x,
        eval_y=eval_y,
        num_classes=classes,
        metadata={"kind": "synthetic", "seed": seed, "image_size": image_size},
    )


def _read_cifar_file(path: Path) -> tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(path.read_bytes(), dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
        raise ValueError(
            f"{path}: size {raw.size} bytes is not a multiple of the "
            f"{CIFAR_RECORD_BYTES}-byte record (truncated or wrong file?)"
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.max() > 9:
        raise ValueError(f"{path}: label byte {labels.max()} outside [0, 9]")
    images = records[:, 1:].reshape(-1, *CIFAR_IMAGE_SHAPE).astype(np.float64) / 255.0
    return images, labels


def load_cifar10_binary(path: str | Path) -> Dataset:
    """Load CIFAR-10 from its binary-batches directory (or a single .bin file).

    Pixels are scaled to [0, 1] then normalized per channel with mean/std
    computed on the training split; the constants land in metadata.
    """
    path = Path(path)
    if path.is_dir():
        train_files = sorted(path.glob("data_batch_*.bin"))
        test_files = sorted(path.glob("test_batch.bin"))
        if not train_files:
            raise FileNotFoundError(f"no data_batch_*.bin under {path}")
    else:
        train_files, test_files = [path], []
    train_parts = [_read_cifar_file(f) for f in train_files]
    train_x = np.concatenate([p[0] for p in train_parts])
    train_y = np.concatenate([p[1] for p in train_parts])
    mean = train_x.mean(axis=(0, 2, 3))
    std = train_x.std(axis=(0, 2, 3))
    std = np.where(std == 0, 1.0, std)
    norm = lambda x: (x - mean[None, :, None, None]) / std[None, :, None, None]
    if test_files:
        eval_x, eval_y = _read_cifar_file(test_files[0])
    else:
        eval_x, eval_y = train_x[:0], train_y[:0]
    return Dataset(
        train_x=norm(train_x),
        train_y=train_y,
        eval_x=norm(eval_x) if len(eval_x) else eval_x,
        eval_y=eval_y,
        num_classes=10,
        metadata={
            "kind": "cifar10",
            "normalize_mean": mean.tolist(),
            "normalize_std": std.tolist(),
            "train_files": [f.name for f in train_files],
        },
    )
