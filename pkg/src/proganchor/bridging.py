"""Feature bridging: mixup between adjacent anchors' features and labels,
simulating the continuous real-to-fake transition.

Only pairs exactly one rank apart are constructible; mixing across
skip-neighbor anchors would open shortcut transition paths and is rejected
at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import torch

from .errors import FrameMismatchError
from .labels import AnchorKind, Organization, adjacent_pairs, is_adjacent


@dataclass(frozen=True)
class BridgedSample:
    """A mixed feature with its mixed label and provenance.

    Construction rejects pairs that are not adjacent under the carried
    organization, so skip-neighbor samples are unrepresentable.
    """

    feature: torch.Tensor
    label: np.ndarray
    pair: tuple[AnchorKind, AnchorKind]
    alpha: float
    organization: Organization = Organization.R2B2D

    def __post_init__(self):
        if not is_adjacent(self.pair[0], self.pair[1], self.organization):
            raise ValueError(f"non-adjacent pair {self.pair} under {self.organization}")


def mix(a, b, alpha: float):
    """alpha * a + (1 - alpha) * b; endpoints reproduce an input bit-exactly."""
    if alpha == 1.0:
        return a.clone() if isinstance(a, torch.Tensor) else np.array(a, copy=True)
    if alpha == 0.0:
        return b.clone() if isinstance(b, torch.Tensor) else np.array(b, copy=True)
    return alpha * a + (1.0 - alpha) * b


def adjacency_check(
    pair: tuple[AnchorKind, AnchorKind],
    organization: Organization = Organization.R2B2D,
) -> bool:
    """True iff the two kinds are exactly one rank apart in the organization."""
    return is_adjacent(pair[0], pair[1], organization)


def bridge(
    quad_features: Mapping[AnchorKind, torch.Tensor],
    quad_labels: Mapping[AnchorKind, np.ndarray],
    rng: np.random.Generator,
    pairs_per_quad: int = 3,
    organization: Organization = Organization.R2B2D,
    frame_ids: Sequence[str] | None = None,
) -> list[BridgedSample]:
    """Draw mixed samples between adjacent anchors of one aligned quad.

    Each draw picks an adjacent pair uniformly and a mixing ratio uniform on
    [0, 1]; the lower-rank anchor gets weight alpha. Features must all come
    from the same video frame; pass frame_ids to enforce that.
    """
    if frame_ids is not None and len(set(frame_ids)) > 1:
        raise FrameMismatchError(f"bridging features from different frames: {sorted(set(frame_ids))}")
    candidates = [p for p in adjacent_pairs(organization) if p[0] in quad_features and p[1] in quad_features]
    if not candidates:
        raise ValueError("no adjacent anchor pairs available in the given features")
    out = []
    for _ in range(pairs_per_quad):
        lo, hi = candidates[int(rng.integers(len(candidates)))]
        alpha = float(rng.uniform(0.0, 1.0))
        out.append(
            BridgedSample(
                feature=mix(quad_features[lo], quad_features[hi], alpha),
                label=mix(np.asarray(quad_labels[lo], dtype=np.float64), np.asarray(quad_labels[hi], dtype=np.float64), alpha),
                pair=(lo, hi),
                alpha=alpha,
                organization=organization,
            )
        )
    return out
