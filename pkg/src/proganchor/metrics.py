"""Detection metrics and latent-feature regularity measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import DegenerateEmbeddingError, MetricError
from .labels import AnchorKind, Organization, anchor_rank


@dataclass
class ScoreSet:
    """Per-item detection scores with binary labels and video grouping."""

    item_ids: list[str]
    video_ids: list[str]
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.item_ids) == len(self.video_ids) == len(self.scores) == len(self.labels)):
            raise MetricError("score set fields have mismatched lengths")


def _check_two_classes(labels: np.ndarray) -> tuple[int, int]:
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"both classes required: {n_pos} positive, {n_neg} negative")
    return n_pos, n_neg


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with ties counted 0.5, via midranks.

    Equals the fraction of (positive, negative) pairs where the positive
    scores higher, ties worth half.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _check_two_classes(labels)
    ranks = stats.rankdata(scores, method="average")
    rank_sum = float(np.sum(ranks[labels == 1]))
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _roc_polyline(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ROC corner points as (false-positive rate, false-negative rate).

    Points run from the accept-nothing end (0, 1) to the accept-everything
    end (1, 0), one corner per distinct score, with "score >= threshold"
    counted as a fake call.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos, n_neg = _check_two_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.diff(s) != 0, True]
    tp = np.cumsum(y == 1)[last_of_group]
    fp = np.cumsum(y == 0)[last_of_group]
    fpr = np.r_[0.0, fp / n_neg]
    fnr = np.r_[1.0, 1.0 - tp / n_pos]
    return fpr, fnr


def eer(scores: np.ndarray, labels: np.ndarray) -> float:
    """Equal error rate: where false-accept meets false-reject on the ROC.

    The crossing is located by linear interpolation between the two ROC
    corners that bracket it.
    """
    fpr, fnr = _roc_polyline(scores, labels)
    gap = fnr - fpr
    for k in range(len(gap) - 1):
        if gap[k + 1] <= 0.0:
            denom = gap[k] - gap[k + 1]
            t = 0.0 if denom == 0.0 else gap[k] / denom
            return float(fpr[k] + t * (fpr[k + 1] - fpr[k]))
    return float(fpr[-1])


def video_auc(score_set: ScoreSet) -> float:
    """AUC over per-video mean scores.

    Every frame of a video must carry the same label.
    """
    by_video: dict[str, list[int]] = {}
    for i, vid in enumerate(score_set.video_ids):
        by_video.setdefault(vid, []).append(i)
    v_scores, v_labels = [], []
    for vid, idx in by_video.items():
        lab = set(score_set.labels[idx].tolist())
        if len(lab) != 1:
            raise MetricError(f"video {vid} mixes labels {sorted(lab)}")
        v_scores.append(float(np.mean(score_set.scores[idx])))
        v_labels.append(lab.pop())
    return auc(np.array(v_scores), np.array(v_labels))


def frame_metrics(score_set: ScoreSet) -> dict[str, float]:
    """AUC, EER and video-level AUC of one score set."""
    return {
        "auc": auc(score_set.scores, score_set.labels),
        "eer": eer(score_set.scores, score_set.labels),
        "video_auc": video_auc(score_set),
    }


def perturbed_distance(
    original: np.ndarray,
    perturbed: np.ndarray,
    dim_std: np.ndarray,
    formula: str = "difference",
) -> float:
    """Mean standardized distance between an embedding and its perturbed versions.

    ``difference`` (the default) averages ||(F_i - F) / dim_std||_2 over the
    perturbed embeddings F_i, which is zero iff every F_i equals F. The
    ``quadrature`` form averages ||sqrt(F_i^2 + F^2) / dim_std||_2 instead; it
    is not a distance (nonzero for identical vectors) and is kept only for
    comparison.
    """
    original = np.asarray(original, dtype=np.float64)
    perturbed = np.atleast_2d(np.asarray(perturbed, dtype=np.float64))
    dim_std = np.asarray(dim_std, dtype=np.float64)
    if perturbed.shape[0] < 1:
        raise MetricError("at least one perturbed embedding required")
    if np.any(dim_std <= 0):
        raise DegenerateEmbeddingError("per-dimension std must be positive in every dimension")
    if formula == "difference":
        rows = (perturbed - original[None, :]) / dim_std[None, :]
    elif formula == "quadrature":
        rows = np.sqrt(perturbed**2 + original[None, :] ** 2) / dim_std[None, :]
    else:
        raise ValueError(f"unknown formula {formula!r}")
    return float(np.mean(np.linalg.norm(rows, axis=1)))


def mpd(
    originals: np.ndarray,
    perturbed: np.ndarray,
    formula: str = "difference",
    dim_std: np.ndarray | None = None,
) -> float:
    """Mean perturbed distance over a distribution of embeddings.

    ``originals`` is (m, d); ``perturbed`` is (m, n, d) with the n perturbed
    embeddings of each item. The per-dimension std is computed over the
    original dump unless given explicitly.
    """
    originals = np.asarray(originals, dtype=np.float64)
    perturbed = np.asarray(perturbed, dtype=np.float64)
    if originals.ndim != 2 or originals.shape[0] == 0:
        raise MetricError("empty or non-2D embedding dump")
    if perturbed.shape[0] != originals.shape[0] or perturbed.shape[2] != originals.shape[1]:
        raise MetricError("perturbed dump shape does not match originals")
    if dim_std is None:
        dim_std = originals.std(axis=0)
    if np.any(dim_std <= 0):
        raise DegenerateEmbeddingError("original dump has zero spread in some dimension")
    return float(
        np.mean([perturbed_distance(originals[j], perturbed[j], dim_std, formula) for j in range(originals.shape[0])])
    )


def ordering_statistic(
    kinds: Sequence[AnchorKind],
    embeddings: np.ndarray,
    organization: Organization = Organization.R2B2D,
) -> float:
    """How progressively the anchors are laid out in embedding space, in [-1, 1].

    Spearman rank correlation between each item's anchor rank and its
    projection onto the axis from the lowest-rank centroid to the
    highest-rank centroid (real -> deepfake in the default organization).
    +1 means the anchors proceed monotonically along that axis.

    The value is invariant under global rotation and translation of the
    embedding space; because the axis is derived from the anchor centroids
    themselves, the statistic is orientation-free (a perfectly progressive
    line scores +1 regardless of which way it points), and values near -1
    would require the middle anchors to anti-order against the endpoints.
    """
    embeddings = np.asarray(embeddings, dtype=np.float64)
    ranks = np.array([anchor_rank(k, organization) for k in kinds], dtype=np.float64)
    present = sorted(set(kinds), key=lambda k: anchor_rank(k, organization))
    if len(present) < 2:
        raise MetricError("ordering statistic needs at least two anchor kinds")
    centroids = {k: embeddings[[i for i, kk in enumerate(kinds) if kk == k]].mean(axis=0) for k in present}
    axis = centroids[present[-1]] - centroids[present[0]]
    scale = float(np.max(np.abs(embeddings)) or 1.0)
    if np.linalg.norm(axis) <= 1e-12 * scale:
        raise DegenerateEmbeddingError("anchor centroids coincide; projection axis is degenerate")
    projections = embeddings @ (axis / np.linalg.norm(axis))
    rho = stats.spearmanr(ranks, projections).statistic
    return float(rho)
