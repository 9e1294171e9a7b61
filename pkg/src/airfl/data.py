"""Datasets: synthesis, non-i.i.d. partitioning, mini-batch streams, IDX/CSV I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801

# Fixed sub-stream tags so every random draw in a run is keyed by
# (root seed, stream, *context) and parallel/serial execution agree.
STREAM_DATASET = 1
STREAM_PARTITION = 2
STREAM_INIT = 3
STREAM_BATCH = 4
STREAM_NOISE = 5
STREAM_PROJECTION = 6


def keyed_rng(seed: int, stream: int, *context: int) -> np.random.Generator:
    """Deterministic generator for a named sub-stream of a root seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), *map(int, context)]))


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with integer class labels and a per-class index."""

    features: np.ndarray  # (n, p) float64
    labels: np.ndarray    # (n,) int64 in [0, num_classes)
    num_classes: int
    class_indices: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.features) == 0:
            raise ValueError("dataset must be a non-empty (n, p) feature matrix")
        if len(self.labels) != len(self.features):
            raise ValueError("features and labels length mismatch")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range [0, num_classes)")
        object.__setattr__(
            self, "class_indices",
            tuple(np.flatnonzero(self.labels == c) for c in range(self.num_classes)),
        )

    def __len__(self) -> int:
        return len(self.features)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)


def synth_dataset(num_classes: int, p: int, n: int, separation: float, seed: int) -> Dataset:
    """Gaussian class-conditional clusters with controllable mean separation.

    Class means sit at `separation` times seeded unit directions; per-class
    covariance is the identity. separation=0 collapses all classes onto the
    same distribution. Byte-identical output per seed.
    """
    if num_classes < 1 or p < 1:
        raise ValueError("num_classes and p must be positive")
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    rng = keyed_rng(seed, STREAM_DATASET)
    dirs = rng.standard_normal((num_classes, p))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = separation * dirs
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    features = means[labels] + rng.standard_normal((n, p))
    return Dataset(features, labels, num_classes)


def quadratic_dataset(d: int, R: int, spread: float, seed: int) -> Dataset:
    """Device-center dataset for the quadratic toy objective.

    Row i is the center c_i of f_i(theta) = 0.5 * ||theta - c_i||^2; labels are
    a dummy single class. Partition this with one sample per device.
    """
    rng = keyed_rng(seed, STREAM_DATASET)
    centers = spread * rng.standard_normal((R, d))
    return Dataset(centers, np.zeros(R, dtype=np.int64), 1)


def partition_noniid(data: Dataset, R: int, excluded_per_device: int, seed: int,
                     samples_per_device: int | None = None) -> list[Dataset]:
    """Split a dataset across R devices, each missing `excluded_per_device` classes.

    Excluded sets are consecutive blocks of a seeded class permutation,
    assigned round-robin, so exclusion coverage is balanced across devices.
    Each device draws equal counts per available class, with replacement.
    The paper leaves the exclusion assignment unspecified; results are mildly
    sensitive to it, so the seed fixes this choice explicitly.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if not (0 <= excluded_per_device < data.num_classes):
        raise ValueError("excluded_per_device must satisfy 0 <= e < num_classes")
    if samples_per_device is None:
        samples_per_device = max(1, len(data) // R)
    C = data.num_classes
    perm = keyed_rng(seed, STREAM_PARTITION).permutation(C)
    out = []
    for i in range(R):
        excluded = {int(perm[(i * excluded_per_device + j) % C]) for j in range(excluded_per_device)}
        available = [c for c in range(C) if c not in excluded]
        per_class = max(1, samples_per_device // len(available))
        rng_i = keyed_rng(seed, STREAM_PARTITION, i)
        idx = np.concatenate([
            rng_i.choice(data.class_indices[c], size=per_class, replace=True)
            for c in available
        ])
        out.append(data.subset(idx))
    return out


def draw_minibatch(data: Dataset, batch_size: int, seed: int, device_id: int,
                   round_t: int, step_q: int) -> tuple[np.ndarray, np.ndarray]:
    """Sample a mini-batch with replacement from a device dataset.

    The stream is keyed by (seed, device, round, local step): re-running any
    (device, t, q) cell reproduces the same batch regardless of evaluation
    order. batch_size=0 means the deterministic full batch.
    """
    if batch_size == 0:
        return data.features, data.labels
    rng = keyed_rng(seed, STREAM_BATCH, device_id, round_t, step_q)
    idx = rng.integers(0, len(data), size=batch_size)
    return data.features[idx], data.labels[idx]


def load_idx_images(path: str | Path) -> np.ndarray:
    """Read an IDX3 ubyte image file into an (n, rows*cols) float array in [0, 1]."""
    raw = Path(path).read_bytes()
    magic, n, rows, cols = struct.unpack_from(">iiii", raw, 0)
    if magic != IDX_MAGIC_IMAGES:
        raise ValueError(f"bad IDX image magic 0x{magic:08x}, expected 0x{IDX_MAGIC_IMAGES:08x}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path: str | Path) -> np.ndarray:
    """Read an IDX1 ubyte label file into an (n,) int64 array."""
    raw = Path(path).read_bytes()
    magic, n = struct.unpack_from(">ii", raw, 0)
    if magic != IDX_MAGIC_LABELS:
        raise ValueError(f"bad IDX label magic 0x{magic:08x}, expected 0x{IDX_MAGIC_LABELS:08x}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=8).astype(np.int64)


def load_idx_dataset(images_path: str | Path, labels_path: str | Path,
                     limit: int | None = None, num_classes: int = 10) -> Dataset:
    features = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(features) != len(labels):
        raise ValueError("IDX image/label counts differ")
    if limit is not None:
        features, labels = features[:limit], labels[:limit]
    return Dataset(features, labels, num_classes)


def save_csv(data: Dataset, path: str | Path) -> None:
    """Write `feature_0..feature_{p-1},label` rows; floats survive round-trip."""
    p = data.num_features
    header = ",".join(f"feature_{j}" for j in range(p)) + ",label"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for x, y in zip(data.features, data.labels):
            fh.write(",".join(f"{v:.17g}" for v in x) + f",{y}\n")


def load_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "label" or not header[0].startswith("feature_"):
            raise ValueError("CSV header must be feature_0..feature_{p-1},label")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    features = rows[:, :-1]
    labels = rows[:, -1].astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return Dataset(features, labels, num_classes)
