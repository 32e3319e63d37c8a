"""Hybrid deepfake/blendfake detector training with progressively organized
latent anchors: blendfake synthesis, four-anchor aligned batches, attribute
heads with projected attention, feature bridging, a feature-transition
constraint, and latent-space regularity diagnostics.
"""

from .labels import AnchorKind, AttributeLabel, Organization, Strategy
from .losses import LossReport, LossWeights
from .model import BackboneSpec, ForgeryDetector
from .training import RunConfig, Trainer, Variant

__all__ = [
    "AnchorKind",
    "AttributeLabel",
    "BackboneSpec",
    "ForgeryDetector",
    "LossReport",
    "LossWeights",
    "Organization",
    "RunConfig",
    "Strategy",
    "Trainer",
    "Variant",
]

__version__ = "0.1.0"
