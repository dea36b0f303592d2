"""Generator and discriminator losses for the two-generator game.

Scores are discriminator outputs in (0, 1). Losses are returned as values to
minimize; the discriminator objective is negated accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import tensor as T
from .tensor import DomainError, Tensor

GeneratorMode = Literal["vanilla", "competing", "conceding"]
MessageMode = Literal["none", "message_passing", "conditioned_message_passing"]

GENERATOR_MODES = ("vanilla", "competing", "conceding")
MESSAGE_MODES = ("none", "message_passing", "conditioned_message_passing")

SCORE_EPS = 1e-7


@dataclass(frozen=True)
class ObjectiveKind:
    generator_mode: GeneratorMode = "vanilla"
    message_mode: MessageMode = "none"

    def __post_init__(self):
        if self.generator_mode not in GENERATOR_MODES:
            raise ValueError(f"unknown generator_mode {self.generator_mode!r}")
        if self.message_mode not in MESSAGE_MODES:
            raise ValueError(f"unknown message_mode {self.message_mode!r}")


@dataclass
class ScoreBatch:
    d_real: Tensor
    d_g1: Tensor
    d_g2: Tensor | None = None


def _check_scores(t: Tensor, what: str) -> None:
    v = t.values
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise DomainError(f"{what}: scores must lie in [0, 1] before clamping")


def clamp_scores(t: Tensor) -> Tensor:
    return T.clip(t, SCORE_EPS, 1.0 - SCORE_EPS)


def hinge(x) -> Tensor:
    return T.max_with_zero(x)


def generator_loss(own_scores: Tensor, other_scores: Tensor | None, mode: str = "vanilla",
                   non_saturating: bool = False) -> Tensor:
    """Batch-mean generator loss.

    vanilla:   log(1 - own)
    competing: log(1 - own) - max(own - other, 0)
    conceding: log(1 - own) + max(own - other, 0)

    ``other_scores`` is always treated as a constant. With ``non_saturating``
    the log(1 - own) term becomes -log(own).
    """
    if mode not in GENERATOR_MODES:
        raise ValueError(f"unknown generator mode {mode!r}")
    _check_scores(own_scores, "own_scores")
    own = clamp_scores(own_scores)
    base = T.neg(T.log(own)) if non_saturating else T.log(T.sub(1.0, own))
    if mode == "vanilla":
        return T.mean(base)
    if other_scores is None:
        raise ValueError(f"{mode} objective needs the other generator's scores")
    if other_scores.shape != own_scores.shape:
        raise T.ShapeError(f"generator_loss: own {own_scores.shape} vs other {other_scores.shape}")
    _check_scores(other_scores, "other_scores")
    other = clamp_scores(other_scores.detach())
    h = hinge(T.sub(own, other))
    return T.mean(T.sub(base, h) if mode == "competing" else T.add(base, h))


def hinge_value(own_scores: Tensor, other_scores: Tensor) -> float:
    own = np.clip(own_scores.values, SCORE_EPS, 1.0 - SCORE_EPS)
    other = np.clip(other_scores.values, SCORE_EPS, 1.0 - SCORE_EPS)
    return float(np.maximum(own - other, 0.0).mean())


def discriminator_loss(scores: ScoreBatch) -> Tensor:
    """-(mean log D(x) + mean log(1 - D(G1)) + mean log(1 - D(G2))).

    With ``d_g2`` absent this is the ordinary single-generator loss.
    """
    _check_scores(scores.d_real, "d_real")
    _check_scores(scores.d_g1, "d_g1")
    fake = T.mean(T.log(T.sub(1.0, clamp_scores(scores.d_g1))))
    if scores.d_g2 is not None:
        _check_scores(scores.d_g2, "d_g2")
        # Summing the two fake terms first keeps the loss exactly symmetric in G1 and G2.
        fake = T.add(fake, T.mean(T.log(T.sub(1.0, clamp_scores(scores.d_g2)))))
    total = T.add(T.mean(T.log(clamp_scores(scores.d_real))), fake)
    return T.neg(total)
