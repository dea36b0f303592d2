"""Seeded randomness, noise samplers and synthetic mixture datasets."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .tensor import Tensor

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

NoiseKind = Literal["uniform_pm1", "normal01"]


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream. The whole state is one unsigned 64-bit integer."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GOLDEN
            out = _mix(z)
        self.state = (self.state + n * int(_GOLDEN)) & _MASK64
        return out

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in [0, 1) with 53 random bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def normal(self, n: int) -> np.ndarray:
        # Box-Muller; 1 - u keeps the log argument in (0, 1].
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[:pairs]))
        theta = 2.0 * np.pi * u[pairs:]
        return np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]

    def integers(self, high: int, n: int) -> np.ndarray:
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        # Sorting random keys; ties are astronomically unlikely and broken stably.
        return np.argsort(self.next_u64(n), kind="stable")

    def split(self, tag: str) -> "Rng":
        """Independent child stream keyed by ``tag``; the parent is not advanced."""
        return Rng(derive_seed(self.state, tag))


def derive_seed(seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{int(seed) & _MASK64}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind
    dim: int

    def __post_init__(self):
        if self.kind not in ("uniform_pm1", "normal01"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"noise dim must be positive, got {self.dim}")


def sample_noise(spec: NoiseSpec, batch: int, rng: Rng) -> Tensor:
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    n = batch * spec.dim
    if spec.kind == "uniform_pm1":
        vals = 2.0 * rng.uniform(n) - 1.0
    else:
        vals = rng.normal(n)
    return Tensor(vals.reshape(batch, spec.dim))


@dataclass
class SyntheticDataset:
    kind: Literal["ring_mixture", "labeled_blobs"]
    centers: np.ndarray
    sigma: float
    samples: Tensor
    labels: np.ndarray = field(default=None)

    @property
    def k(self) -> int:
        return len(self.centers)

    @property
    def n(self) -> int:
        return self.samples.shape[0]


def ring_centers(k: int, radius: float) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(k) / k
    return np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)


def _mixture(kind, centers: np.ndarray, sigma: float, n: int, rng: Rng) -> SyntheticDataset:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    labels = rng.integers(len(centers), n)
    noise = rng.normal(2 * n).reshape(n, 2)
    samples = centers[labels] + sigma * noise
    return SyntheticDataset(kind, centers, float(sigma), Tensor(samples), labels)


def make_ring_mixture(k: int, radius: float, sigma: float, n: int, rng: Rng) -> SyntheticDataset:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return _mixture("ring_mixture", ring_centers(k, radius), sigma, n, rng)


def make_labeled_blobs(k: int, sigma: float, n: int, rng: Rng, centers=None, spread: float = 2.0) -> SyntheticDataset:
    """Gaussian blobs; without explicit centers they sit evenly on a circle of radius ``spread``."""
    if centers is None:
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        centers = ring_centers(k, spread)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    return _mixture("labeled_blobs", centers, sigma, n, rng)


def write_dataset_csv(dataset: SyntheticDataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x0", "x1", "label"])
        labels = dataset.labels if dataset.labels is not None else np.full(dataset.n, -1)
        for (x0, x1), lab in zip(dataset.samples.values, labels):
            w.writerow([f"{x0:.6g}", f"{x1:.6g}", int(lab)])
