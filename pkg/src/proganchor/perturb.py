"""Image perturbation families for feature-regularity probing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class PerturbFamily(Enum):
    BLOCK_MASK = "block_mask"
    GAUSSIAN_NOISE = "gaussian_noise"
    SHIFT = "shift"


@dataclass(frozen=True)
class PerturbationSpec:
    """One perturbation family with its intensity ranges.

    Defaults: block masking zeroes a 0.1 fraction of a 4x4 grid (rounded up,
    so 2 of 16 cells); noise variance is drawn uniformly from [10, 50] in
    8-bit pixel units; shifts are drawn uniformly from [-50, 50] pixels on
    each axis with edge replication.
    """

    family: PerturbFamily
    block_ratio: float = 0.1
    grid: tuple[int, int] = (4, 4)
    noise_var_range: tuple[float, float] = (10.0, 50.0)
    shift_limit: int = 50
    repeats: int = 10


def default_suite(repeats: int = 10, shift_limit: int = 50) -> list[PerturbationSpec]:
    """The three-family probing suite at default intensities."""
    return [
        PerturbationSpec(PerturbFamily.BLOCK_MASK, repeats=repeats),
        PerturbationSpec(PerturbFamily.GAUSSIAN_NOISE, repeats=repeats),
        PerturbationSpec(PerturbFamily.SHIFT, shift_limit=shift_limit, repeats=repeats),
    ]


def perturb(image: np.ndarray, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply one randomly-parameterized perturbation; output shape equals input shape."""
    if image.dtype != np.uint8:
        raise ValueError("perturb expects uint8 images")
    if spec.family is PerturbFamily.BLOCK_MASK:
        return _block_mask(image, spec, rng)
    if spec.family is PerturbFamily.GAUSSIAN_NOISE:
        return _gaussian_noise(image, spec, rng)
    if spec.family is PerturbFamily.SHIFT:
        return _shift(image, spec, rng)
    raise ValueError(f"unknown family {spec.family}")


def _block_mask(image: np.ndarray, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    gh, gw = spec.grid
    n_cells = gh * gw
    n_masked = math.ceil(spec.block_ratio * n_cells)
    chosen = rng.choice(n_cells, size=n_masked, replace=False)
    h, w = image.shape[:2]
    ys = np.linspace(0, h, gh + 1).round().astype(int)
    xs = np.linspace(0, w, gw + 1).round().astype(int)
    out = image.copy()
    for cell in chosen:
        r, c = divmod(int(cell), gw)
        out[ys[r] : ys[r + 1], xs[c] : xs[c + 1]] = 0
    return out


def _gaussian_noise(image: np.ndarray, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    var = rng.uniform(*spec.noise_var_range)
    noise = rng.normal(0.0, math.sqrt(var), size=image.shape)
    return np.clip(np.rint(image.astype(np.float64) + noise), 0, 255).astype(np.uint8)


def _shift(image: np.ndarray, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    dx = int(rng.integers(-spec.shift_limit, spec.shift_limit + 1))
    dy = int(rng.integers(-spec.shift_limit, spec.shift_limit + 1))
    return shift_image(image, dx, dy)


def shift_image(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate by whole pixels, replicating edges into the uncovered band."""
    h, w = image.shape[:2]
    dy = int(np.clip(dy, -h, h))
    dx = int(np.clip(dx, -w, w))
    # Index of the source row/column feeding each output position, clamped at
    # the borders so the exposed band repeats the nearest edge.
    rows = np.clip(np.arange(h) - dy, 0, h - 1)
    cols = np.clip(np.arange(w) - dx, 0, w - 1)
    return image[np.ix_(rows, cols)]
