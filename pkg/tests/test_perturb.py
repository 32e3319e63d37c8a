import numpy as np
import pytest

from proganchor.perturb import PerturbationSpec, PerturbFamily, default_suite, perturb, shift_image


def make_image(value=200, size=64):
    return np.full((size, size, 3), value, dtype=np.uint8)


def test_block_mask_zeroes_exactly_two_of_sixteen_cells():
    img = make_image()
    rng = np.random.default_rng(0)
    out = perturb(img, PerturbationSpec(PerturbFamily.BLOCK_MASK), rng)
    cell = (64 // 4) ** 2 * 3
    zeros = int(np.sum(out == 0))
    assert zeros == 2 * cell
    # untouched pixels keep their values
    assert np.all(out[out != 0] == 200)
    assert out.shape == img.shape


def test_block_mask_cell_count_rounds_up():
    # a 0.1 ratio of 16 cells rounds up to 2
    img = make_image(size=32)
    rng = np.random.default_rng(1)
    out = perturb(img, PerturbationSpec(PerturbFamily.BLOCK_MASK, block_ratio=0.1, grid=(4, 4)), rng)
    assert int(np.sum(out == 0)) == 2 * (32 // 4) ** 2 * 3


def test_gaussian_noise_zero_variance_is_identity():
    img = make_image()
    rng = np.random.default_rng(2)
    spec = PerturbationSpec(PerturbFamily.GAUSSIAN_NOISE, noise_var_range=(0.0, 0.0))
    assert np.array_equal(perturb(img, spec, rng), img)


def test_gaussian_noise_changes_pixels_and_stays_in_range():
    img = make_image(10)
    rng = np.random.default_rng(3)
    out = perturb(img, PerturbationSpec(PerturbFamily.GAUSSIAN_NOISE), rng)
    assert out.shape == img.shape
    assert not np.array_equal(out, img)
    assert out.dtype == np.uint8


def test_shift_zero_is_identity():
    img = (np.random.default_rng(4).uniform(0, 255, size=(32, 32, 3))).astype(np.uint8)
    assert np.array_equal(shift_image(img, 0, 0), img)


def test_shift_matches_pad_oracle():
    rng = np.random.default_rng(5)
    img = rng.integers(0, 255, size=(16, 16, 3), dtype=np.uint8)
    for dx, dy in [(3, 0), (0, -2), (-5, 7), (16, 16)]:
        out = shift_image(img, dx, dy)
        padded = np.pad(img, ((16, 16), (16, 16), (0, 0)), mode="edge")
        expected = padded[16 - dy : 32 - dy, 16 - dx : 32 - dx]
        assert np.array_equal(out, expected)


def test_shift_family_respects_limit():
    img = make_image(size=128)
    rng = np.random.default_rng(6)
    out = perturb(img, PerturbationSpec(PerturbFamily.SHIFT, shift_limit=50), rng)
    assert out.shape == img.shape


def test_default_suite_has_three_families():
    suite = default_suite(repeats=7)
    assert [s.family for s in suite] == [PerturbFamily.BLOCK_MASK, PerturbFamily.GAUSSIAN_NOISE, PerturbFamily.SHIFT]
    assert all(s.repeats == 7 for s in suite)


def test_perturb_rejects_non_uint8():
    with pytest.raises(ValueError):
        perturb(np.zeros((8, 8, 3), dtype=np.float32), PerturbationSpec(PerturbFamily.SHIFT), np.random.default_rng(0))
