import numpy as np
import pytest

from proganchor.data import canonical_landmarks
from proganchor.errors import DegenerateHullError, EmptyPoolError, WarpBoundsError
from proganchor.labels import AnchorKind
from proganchor.synthesis import (
    AlignedQuad,
    BlendRecipe,
    LandmarkSet,
    PoolEntry,
    build_aligned_quad,
    build_mask,
    composite,
    find_landmark_match,
    generate_cbi,
    generate_sbi,
    hull_mask,
)

SIZE = 64


def face_landmarks(cx=0.5, cy=0.5, rx=0.30, ry=0.38, angle=0.0):
    return canonical_landmarks(SIZE, cx, cy, rx, ry, angle)


def textured_image(seed=0, size=SIZE):
    rng = np.random.default_rng(seed)
    base = rng.integers(40, 220, size=(size, size, 3))
    return base.astype(np.uint8)


# ---------------------------------------------------------------------------
# masks
# ---------------------------------------------------------------------------


def test_hull_mask_degenerate_landmarks_rejected():
    collinear = LandmarkSet(np.stack([np.linspace(5, 50, 10), np.linspace(5, 50, 10)], axis=1))
    with pytest.raises(DegenerateHullError):
        hull_mask(collinear, (SIZE, SIZE))


def test_build_mask_support_inside_hull_and_bounded():
    lms = face_landmarks()
    rng = np.random.default_rng(3)
    hard = hull_mask(lms, (SIZE, SIZE))
    mask = build_mask(lms, (SIZE, SIZE), rng, feather_sigma=2.0, deform_amplitude=2.0, hull_margin=2.0)
    assert mask.min() >= 0.0 and mask.max() <= 1.0
    assert np.all(hard[mask > 0] == 1.0)


# ---------------------------------------------------------------------------
# self-blending
# ---------------------------------------------------------------------------


def test_sbi_zero_mask_reproduces_base_exactly():
    base = textured_image(1)
    recipe = BlendRecipe(mask=np.zeros((SIZE, SIZE), np.float32), blend_ratio=1.0)
    sample = generate_sbi(base, face_landmarks(), rng_seed=3, recipe=recipe)
    assert np.array_equal(sample.image, base)


def test_sbi_deterministic():
    base = textured_image(2)
    lms = face_landmarks()
    a = generate_sbi(base, lms, rng_seed=7)
    b = generate_sbi(base, lms, rng_seed=7)
    assert np.array_equal(a.image, b.image)
    assert a.recipe.blend_ratio == b.recipe.blend_ratio
    c = generate_sbi(base, lms, rng_seed=8)
    assert not np.array_equal(a.image, c.image)


def test_sbi_locality_pixel_diff_oracle():
    base = textured_image(3)
    sample = generate_sbi(base, face_landmarks(), rng_seed=7)
    support = sample.recipe.mask > 0
    outside = ~support
    assert np.array_equal(sample.image[outside], base[outside])
    assert np.any(sample.image[support] != base[support])
    assert sample.kind is AnchorKind.SBI


def test_sbi_degenerate_hull_rejected():
    base = textured_image(4)
    collinear = LandmarkSet(np.stack([np.linspace(5, 50, 81), np.full(81, 30.0)], axis=1))
    with pytest.raises(DegenerateHullError):
        generate_sbi(base, collinear, rng_seed=0)


# ---------------------------------------------------------------------------
# landmark matching
# ---------------------------------------------------------------------------


def brute_force_match(query, pool):
    best = None
    for frame_id, lms in pool:
        d = float(np.mean(np.linalg.norm(lms.centered() - query.centered(), axis=1)))
        if best is None or d < best[0] or (d == best[0] and frame_id < best[1]):
            best = (d, frame_id)
    return best[1]


def test_match_identical_landmarks_win():
    query = face_landmarks()
    pool = [("far", face_landmarks(rx=0.2)), ("same", LandmarkSet(query.points + 5.0))]
    # translation alignment makes the shifted copy distance exactly zero
    assert find_landmark_match(query, pool) == "same"


def test_match_constructed_distances():
    rng = np.random.default_rng(5)
    query = face_landmarks()

    def at_distance(d):
        offsets = rng.normal(size=query.points.shape)
        offsets -= offsets.mean(axis=0, keepdims=True)
        offsets *= d / np.mean(np.linalg.norm(offsets, axis=1))
        return LandmarkSet(query.points + offsets)

    pool = [("a", at_distance(5.0)), ("b", at_distance(2.0)), ("c", at_distance(9.0))]
    assert find_landmark_match(query, pool) == "b"


def test_match_ties_break_to_lowest_frame_id():
    query = face_landmarks()
    tied = LandmarkSet(query.points + 2.0)
    pool = [("z", tied), ("a", tied)]
    assert find_landmark_match(query, pool) == "a"


def test_match_equals_brute_force_on_random_pools():
    rng = np.random.default_rng(6)
    for _ in range(25):
        query = face_landmarks()
        pool = []
        for i in range(50):
            jitter = rng.normal(0, rng.uniform(0.5, 4.0), size=query.points.shape).astype(np.float32)
            pool.append((f"f{i:03d}", LandmarkSet(query.points + jitter)))
        assert find_landmark_match(query, pool) == brute_force_match(query, pool)


def test_match_empty_pool_rejected():
    with pytest.raises(EmptyPoolError):
        find_landmark_match(face_landmarks(), [])


# ---------------------------------------------------------------------------
# cross-blending
# ---------------------------------------------------------------------------


def test_cbi_self_blend_degenerate_case():
    base = textured_image(7)
    lms = face_landmarks()
    recipe = BlendRecipe(mask=hull_mask(lms, base.shape), blend_ratio=1.0, color_transfer=None)
    sample = generate_cbi(base, lms, base, lms, rng_seed=1, recipe=recipe)
    assert np.array_equal(sample.image, base)


def test_cbi_deterministic():
    base, source = textured_image(8), textured_image(9)
    base_lms = face_landmarks()
    source_lms = face_landmarks(cx=0.52, cy=0.49)
    a = generate_cbi(base, base_lms, source, source_lms, rng_seed=11)
    b = generate_cbi(base, base_lms, source, source_lms, rng_seed=11)
    assert np.array_equal(a.image, b.image)
    assert a.kind is AnchorKind.CBI


def test_cbi_two_tone_compositing_oracle():
    base = np.full((SIZE, SIZE, 3), 100, dtype=np.uint8)
    source = np.full((SIZE, SIZE, 3), 200, dtype=np.uint8)
    lms = face_landmarks()
    mask = hull_mask(lms, base.shape)
    recipe = BlendRecipe(mask=mask, blend_ratio=1.0, color_transfer=None)
    sample = generate_cbi(base, lms, source, lms, rng_seed=2, recipe=recipe)
    inside, outside = mask == 1.0, mask == 0.0
    assert np.all(sample.image[inside] == 200)
    assert np.all(sample.image[outside] == 100)


def test_cbi_out_of_bounds_warp_rejected():
    base, source = textured_image(10), textured_image(11)
    base_lms = face_landmarks()
    # source landmarks far outside the source image force the warp to sample
    # uncovered territory under the whole mask
    source_lms = LandmarkSet(base_lms.points + np.array([300.0, 0.0], dtype=np.float32))
    with pytest.raises(WarpBoundsError):
        generate_cbi(base, base_lms, source, source_lms, rng_seed=3)


# ---------------------------------------------------------------------------
# aligned quads
# ---------------------------------------------------------------------------


def make_pool(n=6, seed=20):
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n):
        lms = face_landmarks(cx=0.5 + rng.uniform(-0.02, 0.02), cy=0.5 + rng.uniform(-0.02, 0.02))
        entries.append(
            PoolEntry(
                frame_id=f"pool{i:02d}",
                identity_id=f"ident{i % 3}",
                landmarks=lms,
                image=textured_image(100 + i),
            )
        )
    return entries


def test_quad_labels_are_exactly_the_anchor_table():
    base = textured_image(12)
    quad = build_aligned_quad(
        "frame0", "identX", base, face_landmarks(), textured_image(13), make_pool(), rng_seed=5
    )
    labels = [tuple(l.as_array()) for l in quad.attribute_labels()]
    assert labels == [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)]
    assert quad.KINDS == (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE)
    assert len(quad.images()) == 4


def test_quad_drop_policy_on_empty_pool():
    base = textured_image(14)
    pool = [e for e in make_pool() if e.identity_id == "ident0"]
    with pytest.raises(EmptyPoolError):
        build_aligned_quad("frame1", "ident0", base, face_landmarks(), base, pool, rng_seed=6)


def test_quad_substitute_policy_flags_fallback():
    base = textured_image(15)
    pool = [e for e in make_pool() if e.identity_id == "ident0"]
    quad = build_aligned_quad(
        "frame2", "ident0", base, face_landmarks(), base, pool, rng_seed=7,
        cbi_failure_policy="substitute_sbi",
    )
    assert quad.cbi_substituted
    assert quad.cbi.kind is AnchorKind.CBI  # slot keeps its position in the chain


def test_quad_structural_scan():
    pool = make_pool(12)
    for i in range(20):
        base = textured_image(200 + i)
        quad = build_aligned_quad(f"fr{i}", "identX", base, face_landmarks(), base, pool, rng_seed=i)
        assert isinstance(quad, AlignedQuad)
        assert quad.frame_id == f"fr{i}"
        assert all(img.shape == base.shape for img in quad.images())


def test_quad_deterministic():
    pool = make_pool()
    base = textured_image(16)
    a = build_aligned_quad("fr", "identX", base, face_landmarks(), base, pool, rng_seed=9)
    b = build_aligned_quad("fr", "identX", base, face_landmarks(), base, pool, rng_seed=9)
    for x, y in zip(a.images(), b.images()):
        assert np.array_equal(x, y)


# ---------------------------------------------------------------------------
# compositing properties
# ---------------------------------------------------------------------------


def test_composite_zero_mask_identity_random_images():
    rng = np.random.default_rng(17)
    for _ in range(10):
        base = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        source = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        out = composite(base, source, np.zeros((16, 16), np.float32), blend_ratio=1.0)
        assert np.array_equal(out, base)


def test_composite_elementwise_oracle():
    base = np.full((4, 4, 3), 100, dtype=np.uint8)
    source = np.full((4, 4, 3), 180, dtype=np.uint8)
    mask = np.zeros((4, 4), np.float32)
    mask[1:3, 1:3] = 0.5
    out = composite(base, source, mask, blend_ratio=0.5)
    # 100 + 0.25 * 80 = 120 inside, 100 outside
    assert np.all(out[1:3, 1:3] == 120)
    assert np.all(out[0] == 100)
