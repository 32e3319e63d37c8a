import numpy as np
import pytest

from proganchor.errors import DegenerateEmbeddingError, MetricError
from proganchor.labels import AnchorKind
from proganchor.metrics import (
    ScoreSet,
    auc,
    eer,
    mpd,
    ordering_statistic,
    perturbed_distance,
    video_auc,
)

# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def auc_oracle(scores, labels):
    """O(n^2) pairwise comparison: P(pos > neg) + 0.5 P(pos == neg)."""
    pos = scores[labels == 1][:, None]
    neg = scores[labels == 0][None, :]
    return float((np.sum(pos > neg) + 0.5 * np.sum(pos == neg)) / (pos.shape[0] * neg.shape[1]))


def eer_oracle(scores, labels):
    """Brute-force counted ROC corners + bisection along the crossing segment."""
    pos, neg = labels == 1, labels == 0
    pts = [(0.0, 1.0)]
    for t in np.unique(scores)[::-1]:
        called_fake = scores >= t
        pts.append((float(np.mean(called_fake[neg])), float(np.mean(~called_fake[pos]))))
    for (f0, m0), (f1, m1) in zip(pts, pts[1:]):
        if m1 - f1 <= 0:
            lo, hi = 0.0, 1.0
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if (m0 + mid * (m1 - m0)) - (f0 + mid * (f1 - f0)) > 0:
                    lo = mid
                else:
                    hi = mid
            t = 0.5 * (lo + hi)
            return f0 + t * (f1 - f0)
    return pts[-1][0]


def video_auc_oracle(score_set):
    videos = sorted(set(score_set.video_ids))
    means, labs = [], []
    for v in videos:
        idx = [i for i, vid in enumerate(score_set.video_ids) if vid == v]
        means.append(float(np.mean(score_set.scores[idx])))
        labs.append(int(score_set.labels[idx[0]]))
    return auc_oracle(np.array(means), np.array(labs))


def random_score_set(rng, n=None, tie_prob=0.3, with_videos=True):
    n = n or int(rng.integers(10, 1000))
    labels = rng.integers(0, 2, size=n)
    if labels.sum() == 0:
        labels[0] = 1
    if labels.sum() == n:
        labels[0] = 0
    scores = rng.uniform(0, 1, size=n)
    if rng.uniform() < tie_prob:
        scores = np.round(scores, 1)  # force heavy ties
    if with_videos:
        # group frames of the same label under shared video ids
        vids = [f"v{int(l)}_{int(rng.integers(0, max(2, n // 8)))}" for l in labels]
    else:
        vids = [f"v{i}" for i in range(n)]
    return ScoreSet([f"i{i}" for i in range(n)], vids, scores, labels)


# ---------------------------------------------------------------------------
# AUC / EER / video AUC
# ---------------------------------------------------------------------------


def test_auc_perfect_separation():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([1, 1, 0, 0])
    assert auc(scores, labels) == 1.0
    assert eer(scores, labels) == 0.0


def test_auc_all_ties_is_half():
    scores = np.full(10, 0.5)
    labels = np.array([1, 0] * 5)
    assert auc(scores, labels) == 0.5


def test_eer_anti_classifier_is_one():
    labels = np.array([1, 1, 0, 0, 1])
    scores = 1.0 - labels.astype(float)
    assert eer(scores, labels) == 1.0


def test_single_class_rejected():
    with pytest.raises(MetricError):
        auc(np.array([0.1, 0.2]), np.array([1, 1]))
    with pytest.raises(MetricError):
        eer(np.array([0.1, 0.2]), np.array([0, 0]))


def test_auc_matches_pairwise_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        ss = random_score_set(rng)
        assert abs(auc(ss.scores, ss.labels) - auc_oracle(ss.scores, ss.labels)) < 1e-12


def test_eer_matches_threshold_sweep_oracle():
    rng = np.random.default_rng(8)
    for _ in range(30):
        ss = random_score_set(rng)
        assert abs(eer(ss.scores, ss.labels) - eer_oracle(ss.scores, ss.labels)) < 1e-6


def test_video_auc_one_frame_per_video_equals_frame_auc():
    rng = np.random.default_rng(9)
    ss = random_score_set(rng, n=64, with_videos=False)
    assert abs(video_auc(ss) - auc(ss.scores, ss.labels)) < 1e-12


def test_video_auc_two_videos():
    ss = ScoreSet(
        ["a", "b", "c", "d"],
        ["vf", "vf", "vr", "vr"],
        np.array([0.9, 0.9, 0.1, 0.1]),
        np.array([1, 1, 0, 0]),
    )
    assert video_auc(ss) == 1.0


def test_video_auc_matches_two_stage_oracle():
    rng = np.random.default_rng(10)
    for _ in range(20):
        ss = random_score_set(rng)
        assert abs(video_auc(ss) - video_auc_oracle(ss)) < 1e-12


def test_video_auc_rejects_mixed_label_video():
    ss = ScoreSet(["a", "b"], ["v", "v"], np.array([0.2, 0.8]), np.array([0, 1]))
    with pytest.raises(MetricError):
        video_auc(ss)


# ---------------------------------------------------------------------------
# perturbed distance / mPD
# ---------------------------------------------------------------------------


def pd_oracle(original, perturbed, dim_std):
    total = 0.0
    for row in perturbed:
        total += np.sqrt(np.sum(((row - original) / dim_std) ** 2))
    return total / len(perturbed)


def test_pd_zero_for_identical():
    v = np.array([1.5, -2.0])
    assert perturbed_distance(v, np.stack([v] * 10), np.array([1.0, 1.0])) == 0.0


def test_pd_unit_construction():
    original = np.zeros(2)
    perturbed = np.array([[3.0, 4.0]])
    dim_std = np.array([5.0, 5.0])  # standardized vector (0.6, 0.8) has norm 1
    assert perturbed_distance(original, perturbed, dim_std) == pytest.approx(1.0, abs=1e-15)


def test_pd_matches_summation_oracle():
    rng = np.random.default_rng(11)
    for _ in range(20):
        original = rng.normal(size=2)
        perturbed = rng.normal(size=(10, 2))
        dim_std = rng.uniform(0.5, 2.0, size=2)
        assert perturbed_distance(original, perturbed, dim_std) == pytest.approx(
            pd_oracle(original, perturbed, dim_std), abs=1e-12
        )


def test_pd_quadrature_form_is_not_a_distance():
    v = np.array([1.0, 1.0])
    val = perturbed_distance(v, np.stack([v] * 3), np.array([1.0, 1.0]), formula="quadrature")
    assert val > 0


def test_pd_rejects_zero_std():
    with pytest.raises(DegenerateEmbeddingError):
        perturbed_distance(np.zeros(2), np.ones((2, 2)), np.array([1.0, 0.0]))


def test_mpd_zero_when_unperturbed():
    rng = np.random.default_rng(12)
    originals = rng.normal(size=(20, 2))
    perturbed = np.repeat(originals[:, None, :], 5, axis=1)
    assert mpd(originals, perturbed) == 0.0


def test_mpd_single_item_reduces_to_pd():
    rng = np.random.default_rng(13)
    originals = rng.normal(size=(5, 3))
    perturbed = originals[:, None, :] + rng.normal(size=(5, 4, 3))
    dim_std = originals.std(axis=0)
    single = perturbed_distance(originals[2], perturbed[2], dim_std)
    only = mpd(originals[2:3], perturbed[2:3], dim_std=dim_std)
    assert only == pytest.approx(single, abs=1e-15)


def test_mpd_gaussian_closed_form():
    # displacements ~ N(0, tau^2 I) in d=2 give E||z/sigma|| = (tau/sigma) * sqrt(pi/2)
    rng = np.random.default_rng(14)
    m, n, sigma, tau = 400, 10, 2.0, 0.5
    originals = rng.normal(0, sigma, size=(m, 2))
    noise = rng.normal(0, tau, size=(m, n, 2))
    value = mpd(originals, originals[:, None, :] + noise, dim_std=np.array([sigma, sigma]))
    expected = (tau / sigma) * np.sqrt(np.pi / 2)
    # estimator std of the mean of m*n standardized norms
    se = (tau / sigma) * np.sqrt((2 - np.pi / 2)) / np.sqrt(m * n)
    assert abs(value - expected) < 3 * se + 1e-3


def test_mpd_empty_rejected():
    with pytest.raises(MetricError):
        mpd(np.zeros((0, 2)), np.zeros((0, 3, 2)))


def test_pd_translation_and_scale_invariance():
    rng = np.random.default_rng(15)
    originals = rng.normal(size=(30, 2))
    perturbed = originals[:, None, :] + rng.normal(size=(30, 6, 2))
    base = mpd(originals, perturbed)
    shifted = mpd(originals + 7.5, perturbed + 7.5)
    assert shifted == pytest.approx(base, rel=1e-12)
    scale = np.array([3.0, 0.25])
    rescaled = mpd(originals * scale, perturbed * scale[None, None, :])
    assert rescaled == pytest.approx(base, rel=1e-9)


# ---------------------------------------------------------------------------
# ordering statistic
# ---------------------------------------------------------------------------

KINDS = [AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE]


def test_ordering_perfect_line():
    emb = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    assert ordering_statistic(KINDS, emb) == pytest.approx(1.0)
    # a reversed line is the same layout rotated by 180 degrees, so the
    # orientation-free statistic still reports a perfect progression
    assert ordering_statistic(list(reversed(KINDS)), emb) == pytest.approx(1.0)


def test_ordering_anti_ordered_middle_scores_low():
    # endpoints in place but SBI/CBI swapped far out of order
    emb = np.array([[0.0, 0.0], [3.0, 3.0], [2.0, 2.0], [1.0, 1.0]])
    assert ordering_statistic(KINDS, emb) < 0.5


def test_ordering_null_is_near_zero():
    rng = np.random.default_rng(16)
    n = 1000
    kinds = [KINDS[i] for i in rng.integers(0, 4, size=n)]
    emb = rng.normal(size=(n, 2))
    assert abs(ordering_statistic(kinds, emb)) < 0.2


def test_ordering_rotation_translation_invariance():
    rng = np.random.default_rng(17)
    kinds = [KINDS[i % 4] for i in range(200)]
    emb = np.array([[k.value + rng.normal(0, 0.1), rng.normal()] for k in kinds])
    base = ordering_statistic(kinds, emb)
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = emb @ rot.T + np.array([5.0, -3.0])
    assert ordering_statistic(kinds, moved) == pytest.approx(base, abs=1e-9)


def test_ordering_degenerate_centroids_rejected():
    emb = np.zeros((8, 2))
    with pytest.raises(DegenerateEmbeddingError):
        ordering_statistic([KINDS[i % 4] for i in range(8)], emb)


def test_ordering_needs_two_kinds():
    with pytest.raises(MetricError):
        ordering_statistic([AnchorKind.REAL] * 4, np.random.default_rng(0).normal(size=(4, 2)))
