"""Seeded sweeps used by the acceptance suite and for quick desk experiments."""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

from .config import TrainConfig
from .data import Rng, derive_seed
from .evaluation import ModeCoverageReport, mode_coverage, sample_generators
from .trainer import TrainingState, initial_state, make_dataset, train_step
from .tensor import Tensor

EVAL_SAMPLES = 2000


@dataclass
class CoverageOutcome:
    seed: int
    g1: ModeCoverageReport
    g2: ModeCoverageReport | None

    @property
    def union(self) -> set[int]:
        modes = set(self.g1.covered_modes)
        if self.g2 is not None:
            modes |= set(self.g2.covered_modes)
        return modes

    @property
    def max_individual(self) -> int:
        return max(self.g1.modes_covered, self.g2.modes_covered if self.g2 else 0)

    def summary(self) -> dict:
        out = {"seed": self.seed, "g1_modes": self.g1.modes_covered, "g1_hq": round(self.g1.high_quality_fraction, 4)}
        if self.g2 is not None:
            out.update(g2_modes=self.g2.modes_covered, g2_hq=round(self.g2.high_quality_fraction, 4),
                       union_modes=len(self.union))
        return out


def run_in_memory(config: TrainConfig) -> TrainingState:
    """Train without touching disk; same iteration sequence as :func:`mpmgan.trainer.train`."""
    dataset = make_dataset(config)
    state = initial_state(config)
    samples = dataset.samples.values
    while state.iteration < config.n_iters:
        idx = state.rng.integers(dataset.n, config.batch)
        _, state.buffer = train_step(state.bundle, state.buffer, Tensor(samples[idx]), state.rng)
    return state


def coverage_after_training(config: TrainConfig, n_samples: int = EVAL_SAMPLES) -> CoverageOutcome:
    state = run_in_memory(config)
    dataset = make_dataset(config)
    g1, g2 = sample_generators(state.bundle, state.buffer, n_samples, Rng(derive_seed(config.seed, "coverage")))
    return CoverageOutcome(config.seed, mode_coverage(g1, dataset),
                           None if g2 is None else mode_coverage(g2, dataset))


def scratch_dir() -> Path:
    return Path(tempfile.mkdtemp(prefix="mpmgan-"))
