"""Training objectives: oriented attribute loss, detection loss, feature
transition loss, and their weighted combination.

All losses reduce to a per-batch mean so the trade-off weights are
batch-size independent. Probabilities are clamped away from {0, 1} before
any log.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

import torch

from .errors import ShapeMismatchError

EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Trade-off weights of the attribute and transition terms."""

    beta: float = 1.0
    gamma: float = 10.0


@dataclass
class LossReport:
    """Per-step loss decomposition, serialized into the training log."""

    epoch: int
    step: int
    l_d: float
    l_o: float
    l_t: float
    l_overall: float
    n_bridged: int = 0
    n_images: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @staticmethod
    def from_json(line: str) -> "LossReport":
        return LossReport(**json.loads(line))


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(EPS, 1.0 - EPS)


def oriented_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy summed over the attribute components, meaned over
    the batch. Applies to anchor features and bridged features alike; targets
    may be soft (mixed labels)."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    p = _clamp(pred)
    per_sample = -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).sum(dim=-1)
    return per_sample.mean()


def multiclass_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Cross-entropy against (possibly soft) one-hot targets, batch mean."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    return -(target * torch.log(_clamp(pred))).sum(dim=-1).mean()


def detection_loss(score: torch.Tensor, label: torch.Tensor) -> torch.Tensor:
    """Standard binary cross-entropy of the fakeness score, batch mean."""
    s = _clamp(score)
    label = label.to(s.dtype)
    return -(label * torch.log(s) + (1.0 - label) * torch.log(1.0 - s)).mean()


def transition_loss(
    pairs: Sequence[tuple[torch.Tensor, torch.Tensor]],
    mapper,
    generator: torch.Generator,
) -> torch.Tensor:
    """Sum over transition steps of the Frobenius distance between the mapped
    source feature and the next-more-fake target feature, batch mean.

    Fresh standard-normal noise is drawn per step from the given generator.
    Targets are detached: gradients must not be able to collapse the target
    distribution toward the mapped one.
    """
    if not pairs:
        raise ValueError("transition loss needs at least one (source, target) pair")
    total = None
    for src, dst in pairs:
        if src.shape != dst.shape:
            raise ShapeMismatchError(f"source {tuple(src.shape)} vs target {tuple(dst.shape)}")
        noise = torch.randn(src.shape, generator=generator, dtype=src.dtype, device=src.device)
        mapped = mapper(noise, src)
        norms = torch.linalg.vector_norm(mapped - dst.detach(), dim=tuple(range(1, src.ndim)))
        total = norms if total is None else total + norms
    return total.mean()


def quad_transition_loss(
    quad_features: Sequence[torch.Tensor],
    mapper,
    generator: torch.Generator,
) -> torch.Tensor:
    """Transition loss along a rank-ordered feature chain (consecutive pairs)."""
    if len(quad_features) < 2:
        raise ValueError("need at least two chain features")
    pairs = [(quad_features[i], quad_features[i + 1]) for i in range(len(quad_features) - 1)]
    return transition_loss(pairs, mapper, generator)


def overall_loss(
    l_d: torch.Tensor | float,
    l_o: torch.Tensor | float,
    l_t: torch.Tensor | float,
    weights: LossWeights = LossWeights(),
):
    """Weighted objective: detection + beta * oriented + gamma * transition."""
    return l_d + weights.beta * l_o + weights.gamma * l_t
