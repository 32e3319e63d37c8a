"""The detector network: pluggable backbone, attribute heads, attention
projector, final detection head, and the noise-conditioned transition mapper.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn

from .errors import ShapeMismatchError
from .labels import Strategy


@dataclass(frozen=True)
class BackboneSpec:
    """Declared encoder geometry.

    ``toy_mode`` routes the trunk through a 2-D bottleneck whose activations
    are exposed as the analysis embedding; the feature map handed to the
    heads keeps the same declared shape either way, so nothing downstream
    changes.
    """

    name: str = "desk_cnn"
    input_size: tuple[int, int] = (256, 256)
    stage_channels: tuple[int, ...] = (16, 32, 64, 64)
    toy_mode: bool = False

    @property
    def feature_shape(self) -> tuple[int, int, int]:
        """(h, w, c) of the emitted feature map."""
        h = self.input_size[0] // (2 ** len(self.stage_channels))
        w = self.input_size[1] // (2 ** len(self.stage_channels))
        return (h, w, self.stage_channels[-1])

    @property
    def embed_dim(self) -> int:
        return 2 if self.toy_mode else self.stage_channels[-1]


def _stage(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, stride=2, padding=1),
        nn.GroupNorm(min(8, c_out), c_out),
        nn.ReLU(inplace=True),
    )


class DeskCNN(nn.Module):
    """Small reference encoder for desk-scale runs.

    In toy mode all information reaching the heads is squeezed through a
    2-D linear bottleneck, so the analysis embedding is the actual learned
    representation rather than a side probe.
    """

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec
        chans = (3,) + tuple(spec.stage_channels)
        self.trunk = nn.Sequential(*[_stage(chans[i], chans[i + 1]) for i in range(len(spec.stage_channels))])
        h, w, c = spec.feature_shape
        if spec.toy_mode:
            self.squeeze = nn.Linear(c, 2)
            self.expand = nn.Linear(2, c * h * w)
        else:
            self.squeeze = None
            self.expand = None

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        h, w, c = self.spec.feature_shape
        feats = self.trunk(images)
        if self.spec.toy_mode:
            z = self.squeeze(feats.mean(dim=(2, 3)))
            feats = self.expand(z).view(-1, c, h, w)
        return feats

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        """Analysis embedding: the 2-D bottleneck in toy mode, pooled features otherwise."""
        feats = self.trunk(images)
        pooled = feats.mean(dim=(2, 3))
        if self.spec.toy_mode:
            return self.squeeze(pooled)
        return pooled


_BACKBONES: dict[str, Callable[[BackboneSpec], nn.Module]] = {"desk_cnn": DeskCNN}


def register_backbone(name: str, factory: Callable[[BackboneSpec], nn.Module]) -> None:
    """Adapter slot for external encoders; the factory must honor the spec's
    feature_shape and provide an ``embed`` method."""
    _BACKBONES[name] = factory


def build_backbone(spec: BackboneSpec) -> nn.Module:
    if spec.name not in _BACKBONES:
        raise KeyError(f"unknown backbone {spec.name!r}; registered: {sorted(_BACKBONES)}")
    return _BACKBONES[spec.name](spec)


class AttributeClassifier(nn.Module):
    """Pools the feature map and predicts forgery attributes per strategy.

    Triplet-binary uses three fully independent two-way heads; the reported
    value of each is the probability that the attribute is present.
    """

    def __init__(self, strategy: Strategy, channels: int, hidden: int = 64):
        super().__init__()
        self.strategy = strategy
        if strategy is Strategy.TRIPLET_BINARY:
            self.heads = nn.ModuleList(
                [nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, 2)) for _ in range(3)]
            )
        elif strategy is Strategy.MULTI_LABEL:
            self.head = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, 3))
        elif strategy is Strategy.MULTI_CLASS:
            self.head = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, 4))
        else:
            raise ValueError(f"unknown strategy {strategy}")

    @property
    def n_outputs(self) -> int:
        return 4 if self.strategy is Strategy.MULTI_CLASS else 3

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        pooled = features.mean(dim=(2, 3))
        if self.strategy is Strategy.TRIPLET_BINARY:
            return torch.stack([torch.softmax(head(pooled), dim=-1)[:, 1] for head in self.heads], dim=-1)
        if self.strategy is Strategy.MULTI_LABEL:
            return torch.sigmoid(self.head(pooled))
        return torch.softmax(self.head(pooled), dim=-1)


class AttentionProjector(nn.Module):
    """Re-dimensions the attribute vector to a feature-shaped attention map.

    Linear expansion to the channel dimension, broadcast over the spatial
    grid, refined by a 1x1 convolution, bounded to (0, 1) by a sigmoid.
    """

    def __init__(self, n_attributes: int, feature_shape: tuple[int, int, int]):
        super().__init__()
        h, w, c = feature_shape
        self.feature_shape = feature_shape
        self.lift = nn.Linear(n_attributes, c)
        self.refine = nn.Conv2d(c, c, 1)

    def forward(self, attributes: torch.Tensor) -> torch.Tensor:
        h, w, c = self.feature_shape
        lifted = self.lift(attributes)[:, :, None, None].expand(-1, c, h, w)
        return torch.sigmoid(self.refine(lifted))


class DetectionHead(nn.Module):
    """Global average pool, linear, sigmoid: the final fakeness score."""

    def __init__(self, channels: int):
        super().__init__()
        self.fc = nn.Linear(channels, 1)

    def forward(self, gated: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc(gated.mean(dim=(2, 3)))).squeeze(-1)


class TransitionMapper(nn.Module):
    """Merges a feature map with same-shaped noise and maps it one anchor
    step toward the fake end: channel concat, two 3x3 convolutions."""

    def __init__(self, channels: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(2 * channels, channels, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, noise: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        if noise.shape != features.shape:
            raise ShapeMismatchError(f"noise {tuple(noise.shape)} vs features {tuple(features.shape)}")
        return self.net(torch.cat([features, noise], dim=1))


class ForgeryDetector(nn.Module):
    """Backbone encoder + attribute classifier + attention projector +
    detection head + transition mapper, composed over one feature geometry."""

    def __init__(self, backbone_spec: BackboneSpec, strategy: Strategy = Strategy.TRIPLET_BINARY, hidden: int = 64):
        super().__init__()
        self.backbone_spec = backbone_spec
        self.strategy = strategy
        h, w, c = backbone_spec.feature_shape
        self.backbone = build_backbone(backbone_spec)
        self.attributes = AttributeClassifier(strategy, c, hidden)
        self.projector = AttentionProjector(self.attributes.n_outputs, backbone_spec.feature_shape)
        self.detector = DetectionHead(c)
        self.transition_mapper = TransitionMapper(c)

    # -- forward pieces ------------------------------------------------------

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        expected = self.backbone_spec.input_size
        if tuple(images.shape[-2:]) != tuple(expected):
            raise ShapeMismatchError(f"input {tuple(images.shape[-2:])} != configured {tuple(expected)}")
        feats = self.backbone(images)
        h, w, c = self.backbone_spec.feature_shape
        if tuple(feats.shape[1:]) != (c, h, w):
            raise ShapeMismatchError(f"backbone emitted {tuple(feats.shape[1:])}, declared {(c, h, w)}")
        return feats

    def classify_attributes(self, features: torch.Tensor) -> torch.Tensor:
        self._check_features(features)
        return self.attributes(features)

    def project_attention(self, attributes: torch.Tensor) -> torch.Tensor:
        return self.projector(attributes)

    def detect(self, features: torch.Tensor, attention: torch.Tensor | None = None) -> torch.Tensor:
        """Score from the attention-gated features; a None attention map means
        the plain path (equivalent to an all-ones map)."""
        self._check_features(features)
        if attention is None:
            return self.detector(features)
        if attention.shape != features.shape:
            raise ShapeMismatchError(f"attention {tuple(attention.shape)} vs features {tuple(features.shape)}")
        return self.detector(features * attention)

    def transition(self, noise: torch.Tensor, features: torch.Tensor) -> torch.Tensor:
        self._check_features(features)
        return self.transition_mapper(noise, features)

    def embed(self, images: torch.Tensor) -> torch.Tensor:
        return self.backbone.embed(images)

    def forward(self, images: torch.Tensor, use_attention: bool = True):
        """Full pass; returns (score, attribute probabilities, features, attention)."""
        feats = self.encode(images)
        if not use_attention:
            return self.detect(feats), None, feats, None
        attrs = self.classify_attributes(feats)
        attention = self.project_attention(attrs)
        return self.detect(feats, attention), attrs, feats, attention

    def _check_features(self, features: torch.Tensor) -> None:
        h, w, c = self.backbone_spec.feature_shape
        if tuple(features.shape[1:]) != (c, h, w):
            raise ShapeMismatchError(f"features {tuple(features.shape[1:])} != declared {(c, h, w)}")
