"""Anchor taxonomy, forgery-attribute label tables, and latent-space organizations.

Everything here is pure and stateless: tables map each anchor kind to its
hard attribute label under the active organization, and ranks derived from
those tables define adjacency for bridging and the direction of the
feature-transition chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Sequence

import numpy as np

ATTRIBUTE_NAMES = ("blending_clue", "identity_inconsistency", "generative_artifact")


class AnchorKind(IntEnum):
    """The four aligned data kinds, in default transition order."""

    REAL = 0
    SBI = 1
    CBI = 2
    DEEPFAKE = 3


class Strategy(Enum):
    """How the attribute classifier is headed.

    TRIPLET_BINARY: three independent two-way heads, one per forgery attribute.
    MULTI_LABEL: a single head emitting the three attribute probabilities.
    MULTI_CLASS: a single four-way head over anchor kinds (carries no order).
    """

    TRIPLET_BINARY = "triplet_binary"
    MULTI_LABEL = "multi_label"
    MULTI_CLASS = "multi_class"


class Organization(Enum):
    """Latent-space organization of the anchors.

    R2B2D: real -> SBI -> CBI -> deepfake, attributes accumulating along the
        chain (the default).
    R2D2B: deepfake sits between real and the blendfakes
        (real -> deepfake -> SBI -> CBI).
    SURROUND: each fake kind carries a single distinct attribute and sits at
        equal rank around real; there is no chain among the fakes.
    """

    R2B2D = "r2b2d"
    R2D2B = "r2d2b"
    SURROUND = "surround"


@dataclass(frozen=True)
class AttributeLabel:
    """Likelihoods of the three forgery attributes.

    Anchor labels are hard {0,1} triples; labels produced by feature bridging
    are convex combinations of two adjacent anchors' labels and live in the
    same space with real-valued fields.
    """

    blending: float
    identity: float
    artifact: float

    def as_array(self) -> np.ndarray:
        return np.array([self.blending, self.identity, self.artifact], dtype=np.float64)

    def rank(self) -> float:
        """Total accumulated forgery: the component sum, in [0, 3]."""
        return self.blending + self.identity + self.artifact

    def mix(self, other: "AttributeLabel", alpha: float) -> "AttributeLabel":
        """Convex combination alpha*self + (1-alpha)*other, componentwise."""
        a, b = self.as_array(), other.as_array()
        m = alpha * a + (1.0 - alpha) * b
        return AttributeLabel(float(m[0]), float(m[1]), float(m[2]))


def progressive_rank(label: AttributeLabel) -> float:
    """Forgery accumulation a0+a1+a2; strictly increasing along the default chain."""
    return label.rank()


# Hard attribute tables. R2B2D accumulates one attribute per step; R2D2B moves
# deepfake next to real and shifts the blendfakes outward; SURROUND gives each
# fake kind exactly one attribute so all three sit at rank 1.
_TABLES: dict[Organization, dict[AnchorKind, AttributeLabel]] = {
    Organization.R2B2D: {
        AnchorKind.REAL: AttributeLabel(0, 0, 0),
        AnchorKind.SBI: AttributeLabel(1, 0, 0),
        AnchorKind.CBI: AttributeLabel(1, 1, 0),
        AnchorKind.DEEPFAKE: AttributeLabel(1, 1, 1),
    },
    Organization.R2D2B: {
        AnchorKind.REAL: AttributeLabel(0, 0, 0),
        AnchorKind.DEEPFAKE: AttributeLabel(1, 0, 0),
        AnchorKind.SBI: AttributeLabel(1, 1, 0),
        AnchorKind.CBI: AttributeLabel(1, 1, 1),
    },
    Organization.SURROUND: {
        AnchorKind.REAL: AttributeLabel(0, 0, 0),
        AnchorKind.SBI: AttributeLabel(1, 0, 0),
        AnchorKind.CBI: AttributeLabel(0, 1, 0),
        AnchorKind.DEEPFAKE: AttributeLabel(0, 0, 1),
    },
}

DEFAULT_CLASS_ORDER = (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE)


def attribute_label(kind: AnchorKind, organization: Organization = Organization.R2B2D) -> AttributeLabel:
    """Hard attribute label of an anchor under the given organization."""
    return _TABLES[organization][kind]


def label_for(
    kind: AnchorKind,
    strategy: Strategy,
    organization: Organization = Organization.R2B2D,
    class_order: Sequence[AnchorKind] = DEFAULT_CLASS_ORDER,
) -> np.ndarray:
    """Ground-truth target for one anchor under a classification strategy.

    TRIPLET_BINARY and MULTI_LABEL share the attribute table (a 3-vector);
    MULTI_CLASS returns a one-hot 4-vector. ``class_order`` may permute the
    one-hot positions: multi-class carries no order, so any permutation is an
    equally valid encoding.
    """
    if strategy is Strategy.MULTI_CLASS:
        if sorted(class_order) != sorted(DEFAULT_CLASS_ORDER):
            raise ValueError(f"class_order must be a permutation of the four kinds, got {class_order}")
        onehot = np.zeros(4, dtype=np.float64)
        onehot[list(class_order).index(kind)] = 1.0
        return onehot
    return attribute_label(kind, organization).as_array()


def detection_label(kind: AnchorKind) -> int:
    """Binary real/fake target: 0 for real, 1 for every other kind."""
    return 0 if kind is AnchorKind.REAL else 1


def anchor_rank(kind: AnchorKind, organization: Organization = Organization.R2B2D) -> int:
    """Integer transition rank of an anchor: its label's attribute count."""
    return int(round(attribute_label(kind, organization).rank()))


def anchor_order(organization: Organization = Organization.R2B2D) -> tuple[AnchorKind, ...]:
    """Anchor kinds sorted by rank (ties keep the default kind order)."""
    return tuple(sorted(AnchorKind, key=lambda k: (anchor_rank(k, organization), int(k))))


def is_adjacent(a: AnchorKind, b: AnchorKind, organization: Organization = Organization.R2B2D) -> bool:
    """True iff the two anchors differ by exactly one rank step."""
    return abs(anchor_rank(a, organization) - anchor_rank(b, organization)) == 1


def adjacent_pairs(organization: Organization = Organization.R2B2D) -> tuple[tuple[AnchorKind, AnchorKind], ...]:
    """All (lower, higher) anchor pairs one rank apart; the only bridgeable pairs."""
    pairs = []
    for a in AnchorKind:
        for b in AnchorKind:
            if anchor_rank(b, organization) == anchor_rank(a, organization) + 1:
                pairs.append((a, b))
    return tuple(pairs)


def transition_pairs(organization: Organization = Organization.R2B2D) -> tuple[tuple[AnchorKind, AnchorKind], ...]:
    """(source, target) pairs for the feature-transition constraint.

    Each anchor maps toward every anchor exactly one rank above it, so the
    default chain yields real->SBI->CBI->deepfake and SURROUND yields the
    three real->fake spokes.
    """
    return adjacent_pairs(organization)


def label_table(organization: Organization = Organization.R2B2D) -> dict[str, list[float]]:
    """JSON-serializable attribute table, stored in run metadata and checkpoints."""
    return {kind.name: [float(v) for v in attribute_label(kind, organization).as_array()] for kind in AnchorKind}
