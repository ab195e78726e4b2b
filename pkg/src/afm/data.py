"""Synthetic classification datasets with controlled, recorded label noise.

Clean labels are kept alongside the (possibly corrupted) given labels for
evaluation only; the test split is never corrupted.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import read_arrays, write_arrays
from .errors import ConfigError

DATASET_KINDS = ("blobs", "two-moons", "rings")
NOISE_MODELS = ("symmetric", "pairflip")


@dataclass
class NoisyDataset:
    features: np.ndarray       # (N, d0)
    given_labels: np.ndarray   # (N,) possibly corrupted on the train split
    clean_labels: np.ndarray   # (N,) hidden, evaluation only
    noise_mask: np.ndarray     # (N,) bool, given != clean
    train_idx: np.ndarray
    test_idx: np.ndarray
    n_classes: int

    def __post_init__(self):
        if not np.array_equal(self.noise_mask, self.given_labels != self.clean_labels):
            raise ConfigError("noise mask inconsistent with labels")
        if np.any(self.noise_mask[self.test_idx]):
            raise ConfigError("test split must stay clean")

    @property
    def input_dim(self):
        return self.features.shape[1]

    @property
    def n_train(self):
        return len(self.train_idx)

    def train_noise_count(self) -> int:
        return int(self.noise_mask[self.train_idx].sum())


def generate(kind: str, classes: int, per_class_train: int, per_class_test: int,
             d0: int, separation: float, seed: int) -> NoisyDataset:
    """Deterministic noise-free dataset; train block first, then test block."""
    if kind not in DATASET_KINDS:
        raise ConfigError(f"kind must be one of {DATASET_KINDS}")
    if classes < 2 or per_class_train < 1 or per_class_test < 1:
        raise ConfigError("need classes >= 2 and per-class counts >= 1")
    rng = np.random.default_rng([int(seed), 0xDA7A])

    if kind == "blobs":
        if classes > d0:
            raise ConfigError("blobs needs classes <= d0 for orthogonal centers")
        # orthonormal directions give exact pairwise center distance = separation
        q, _ = np.linalg.qr(rng.normal(size=(d0, d0)))
        centers = (separation / np.sqrt(2.0)) * q[:classes]
    else:
        centers = None

    def pattern(c, count):
        if kind == "blobs":
            return centers[c] + rng.normal(size=(count, d0))
        t = rng.uniform(0.0, np.pi, size=count)
        pts = np.zeros((count, d0))
        if kind == "two-moons":
            if classes != 2:
                raise ConfigError("two-moons supports exactly 2 classes")
            r = separation
            if c == 0:
                pts[:, 0] = r * np.cos(t)
                pts[:, 1] = r * np.sin(t)
            else:
                pts[:, 0] = r - r * np.cos(t)
                pts[:, 1] = r / 2.0 - r * np.sin(t)
        else:  # rings
            radius = separation * (c + 1)
            full = rng.uniform(0.0, 2.0 * np.pi, size=count)
            pts[:, 0] = radius * np.cos(full)
            pts[:, 1] = radius * np.sin(full)
        pts += rng.normal(scale=0.25, size=(count, d0))
        return pts

    feats, labels = [], []
    for split_count in (per_class_train, per_class_test):
        for c in range(classes):
            feats.append(pattern(c, split_count))
            labels.append(np.full(split_count, c, dtype=np.int64))
    features = np.concatenate(feats)
    clean = np.concatenate(labels)
    n_train = classes * per_class_train
    n_total = len(clean)
    return NoisyDataset(
        features=features,
        given_labels=clean.copy(),
        clean_labels=clean,
        noise_mask=np.zeros(n_total, dtype=bool),
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_total),
        n_classes=classes,
    )


def inject_noise(dataset: NoisyDataset, model: str, rho: float, seed: int) -> NoisyDataset:
    """Corrupt train-split given labels; features and test labels untouched.

    symmetric: with probability rho, reassign uniformly among the other
    C-1 classes (a flip always mislabels). pairflip: with probability rho,
    map class c to (c+1) mod C.
    """
    if model not in NOISE_MODELS:
        raise ConfigError(f"noise model must be one of {NOISE_MODELS}")
    if not 0.0 <= rho <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {rho}")
    rng = np.random.default_rng([int(seed), 0x401E])
    given = dataset.clean_labels.copy()
    c = dataset.n_classes
    flip = rng.uniform(size=dataset.n_train) < rho
    train = dataset.train_idx[flip]
    if model == "symmetric":
        offsets = rng.integers(1, c, size=len(train))
        given[train] = (given[train] + offsets) % c
    else:
        given[train] = (given[train] + 1) % c
    return replace(
        dataset,
        given_labels=given,
        noise_mask=given != dataset.clean_labels,
    )


def one_hot(labels, n_classes: int) -> np.ndarray:
    return np.eye(n_classes)[np.asarray(labels, dtype=np.int64)]


def save_dataset(path, dataset: NoisyDataset):
    write_arrays(path, {
        "features": dataset.features,
        "given_labels": dataset.given_labels.astype(np.float64),
        "clean_labels": dataset.clean_labels.astype(np.float64),
        "noise_mask": dataset.noise_mask.astype(np.float64),
        "train_idx": dataset.train_idx.astype(np.float64),
        "test_idx": dataset.test_idx.astype(np.float64),
        "n_classes": np.asarray(float(dataset.n_classes)),
    })


def load_dataset(path) -> NoisyDataset:
    arrays, _ = read_arrays(path)
    try:
        return NoisyDataset(
            features=arrays["features"],
            given_labels=arrays["given_labels"].astype(np.int64),
            clean_labels=arrays["clean_labels"].astype(np.int64),
            noise_mask=arrays["noise_mask"].astype(bool),
            train_idx=arrays["train_idx"].astype(np.int64),
            test_idx=arrays["test_idx"].astype(np.int64),
            n_classes=int(arrays["n_classes"].reshape(-1)[0]),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing dataset field {exc}") from exc


def dataset_to_csv(path, dataset: NoisyDataset):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        d = dataset.input_dim
        writer.writerow([f"x{i}" for i in range(d)]
                        + ["given_label", "clean_label", "is_noisy", "split"])
        train = set(dataset.train_idx.tolist())
        for i in range(len(dataset.clean_labels)):
            writer.writerow(
                [repr(v) for v in dataset.features[i]]
                + [int(dataset.given_labels[i]), int(dataset.clean_labels[i]),
                   int(dataset.noise_mask[i]),
                   "train" if i in train else "test"])
