"""Blendfake synthesis: self-blended and cross-blended pseudo-fakes, plus
aligned four-anchor groups built from one video frame.

Every generator is a pure function of (inputs, seed): identical calls return
byte-identical images, and pixels outside the blend-mask support always match
the base image exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .errors import DegenerateHullError, EmptyPoolError, WarpBoundsError
from .labels import AnchorKind, AttributeLabel, Organization, attribute_label

_MIN_HULL_AREA = 4.0  # px^2; anything smaller is treated as collinear/empty


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered 2-D facial landmarks in pixel coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float32)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"landmarks must be (n, 2), got {pts.shape}")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])

    def validate_bounds(self, image_shape: tuple[int, ...]) -> None:
        h, w = image_shape[:2]
        xs, ys = self.points[:, 0], self.points[:, 1]
        if xs.min() < 0 or ys.min() < 0 or xs.max() > w - 1 or ys.max() > h - 1:
            raise ValueError("landmarks fall outside the image bounds")

    def centered(self) -> np.ndarray:
        return self.points - self.points.mean(axis=0, keepdims=True)

    @staticmethod
    def load(path: str | Path) -> "LandmarkSet":
        return LandmarkSet(np.loadtxt(path, dtype=np.float32).reshape(-1, 2))

    def save(self, path: str | Path) -> None:
        np.savetxt(path, self.points, fmt="%.3f")


@dataclass(frozen=True)
class ColorTransfer:
    """Per-channel affine match: (x - src_mean) / src_std * dst_std + dst_mean."""

    src_mean: tuple[float, float, float]
    src_std: tuple[float, float, float]
    dst_mean: tuple[float, float, float]
    dst_std: tuple[float, float, float]

    def apply(self, image_f32: np.ndarray) -> np.ndarray:
        out = image_f32.copy()
        for c in range(3):
            std = max(self.src_std[c], 1e-6)
            out[..., c] = (out[..., c] - self.src_mean[c]) / std * self.dst_std[c] + self.dst_mean[c]
        return out


@dataclass(frozen=True)
class BlendRecipe:
    """Everything needed to reproduce one blend deterministically."""

    mask: np.ndarray  # float32 (h, w) in [0, 1]
    blend_ratio: float
    color_transfer: ColorTransfer | None = None
    deform_amplitude: float = 0.0
    feather_sigma: float = 0.0


@dataclass(frozen=True)
class BlendfakeSample:
    image: np.ndarray
    kind: AnchorKind
    source_frame_id: str
    recipe: BlendRecipe


@dataclass(frozen=True)
class SbiParams:
    """Transform intensities for self-blending; all ranges are config-exposed."""

    channel_scale_jitter: float = 0.12
    channel_offset_jitter: float = 12.0
    downscale_range: tuple[float, float] = (0.5, 0.9)
    warp_rotate_deg: float = 3.0
    warp_shift_frac: float = 0.02
    warp_scale_jitter: float = 0.03
    blend_ratio_range: tuple[float, float] = (0.25, 1.0)
    feather_sigma_frac: float = 0.03
    deform_amplitude_frac: float = 0.03
    hull_margin_frac: float = 0.04


@dataclass(frozen=True)
class CbiParams:
    """Cross-blend settings; color transfer is on by default."""

    blend_ratio_range: tuple[float, float] = (0.5, 1.0)
    feather_sigma_frac: float = 0.03
    deform_amplitude_frac: float = 0.03
    hull_margin_frac: float = 0.04
    color_transfer: bool = True


def hull_mask(landmarks: LandmarkSet, image_shape: tuple[int, ...]) -> np.ndarray:
    """Binary convex-hull mask of the landmarks.

    Raises DegenerateHullError when the hull is empty or collinear.
    """
    h, w = image_shape[:2]
    hull = cv2.convexHull(landmarks.points.astype(np.float32))
    if hull is None or len(hull) < 3 or cv2.contourArea(hull) < _MIN_HULL_AREA:
        raise DegenerateHullError(f"landmark hull is degenerate ({len(hull) if hull is not None else 0} vertices)")
    mask = np.zeros((h, w), dtype=np.float32)
    cv2.fillConvexPoly(mask, hull.astype(np.int32).reshape(-1, 2), 1.0)
    return mask


def build_mask(
    landmarks: LandmarkSet,
    image_shape: tuple[int, ...],
    rng: np.random.Generator,
    feather_sigma: float,
    deform_amplitude: float,
    hull_margin: float = 0.0,
) -> np.ndarray:
    """Feathered, randomly deformed blend mask whose support stays inside the hull."""
    hard = hull_mask(landmarks, image_shape)
    mask = hard
    if hull_margin > 0:
        k = max(1, int(round(hull_margin)))
        mask = cv2.erode(mask, np.ones((2 * k + 1, 2 * k + 1), np.uint8))
    if deform_amplitude > 0:
        mask = _elastic_deform(mask, rng, deform_amplitude)
    if feather_sigma > 0:
        mask = cv2.GaussianBlur(mask, (0, 0), feather_sigma)
    # Clip to the hull so the support invariant holds regardless of the
    # deformation/blur parameters drawn.
    return np.clip(np.minimum(mask, hard), 0.0, 1.0)


def _elastic_deform(mask: np.ndarray, rng: np.random.Generator, amplitude: float, grid: int = 4) -> np.ndarray:
    h, w = mask.shape
    coarse = rng.normal(0.0, amplitude, size=(2, grid, grid)).astype(np.float32)
    dx = cv2.resize(coarse[0], (w, h), interpolation=cv2.INTER_CUBIC)
    dy = cv2.resize(coarse[1], (w, h), interpolation=cv2.INTER_CUBIC)
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32))
    return cv2.remap(mask, gx + dx, gy + dy, interpolation=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)


def composite(base: np.ndarray, source: np.ndarray, mask: np.ndarray, blend_ratio: float) -> np.ndarray:
    """base + ratio*mask*(source - base), rounded back to uint8.

    A zero mask reproduces the base bit-exactly, and pixels outside the mask
    support are never touched.
    """
    weight = (mask * float(blend_ratio))[..., None].astype(np.float32)
    out = base.astype(np.float32) + weight * (source.astype(np.float32) - base.astype(np.float32))
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _appearance_jitter(image: np.ndarray, rng: np.random.Generator, params: SbiParams) -> np.ndarray:
    scale = rng.uniform(1 - params.channel_scale_jitter, 1 + params.channel_scale_jitter, size=3)
    offset = rng.uniform(-params.channel_offset_jitter, params.channel_offset_jitter, size=3)
    out = image.astype(np.float32) * scale[None, None, :] + offset[None, None, :]
    return np.clip(out, 0, 255).astype(np.float32)


def _down_up(image: np.ndarray, rng: np.random.Generator, params: SbiParams) -> np.ndarray:
    h, w = image.shape[:2]
    f = rng.uniform(*params.downscale_range)
    small = cv2.resize(image, (max(2, int(w * f)), max(2, int(h * f))), interpolation=cv2.INTER_AREA)
    return cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR)


def _small_warp(image: np.ndarray, rng: np.random.Generator, params: SbiParams) -> np.ndarray:
    h, w = image.shape[:2]
    angle = rng.uniform(-params.warp_rotate_deg, params.warp_rotate_deg)
    scale = 1.0 + rng.uniform(-params.warp_scale_jitter, params.warp_scale_jitter)
    tx = rng.uniform(-params.warp_shift_frac, params.warp_shift_frac) * w
    ty = rng.uniform(-params.warp_shift_frac, params.warp_shift_frac) * h
    m = cv2.getRotationMatrix2D((w / 2, h / 2), angle, scale)
    m[:, 2] += (tx, ty)
    return cv2.warpAffine(image, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)


def generate_sbi(
    base_image: np.ndarray,
    landmarks: LandmarkSet,
    rng_seed: int,
    params: SbiParams = SbiParams(),
    frame_id: str = "",
    recipe: BlendRecipe | None = None,
) -> BlendfakeSample:
    """Self-blended pseudo-fake: a transformed variant of the base blended back
    onto the untouched base under a landmark-hull mask.

    Deterministic given the seed. ``recipe`` overrides the drawn mask/ratio,
    which is how tests force degenerate blends.
    """
    rng = np.random.default_rng(rng_seed)
    h, w = base_image.shape[:2]
    source = _appearance_jitter(base_image, rng, params)
    source = _down_up(source, rng, params)
    source = _small_warp(source, rng, params)
    if recipe is None:
        sigma = max(0.5, params.feather_sigma_frac * min(h, w))
        amp = params.deform_amplitude_frac * min(h, w)
        margin = params.hull_margin_frac * min(h, w)
        mask = build_mask(landmarks, base_image.shape, rng, sigma, amp, margin)
        recipe = BlendRecipe(
            mask=mask,
            blend_ratio=float(rng.uniform(*params.blend_ratio_range)),
            deform_amplitude=amp,
            feather_sigma=sigma,
        )
    image = composite(base_image, source, recipe.mask, recipe.blend_ratio)
    return BlendfakeSample(image=image, kind=AnchorKind.SBI, source_frame_id=frame_id, recipe=recipe)


def find_landmark_match(
    query: LandmarkSet,
    pool: Sequence[tuple[str, LandmarkSet]],
) -> str:
    """Frame id of the pool entry with the smallest mean landmark distance.

    Landmarks are translation-aligned (centroid subtracted) before measuring;
    ties resolve to the lowest frame id. The pool must already exclude frames
    of the query identity.
    """
    if not pool:
        raise EmptyPoolError("landmark match pool is empty")
    q = query.centered().astype(np.float64)
    best_id, best_dist = None, np.inf
    for frame_id, candidate in sorted(pool, key=lambda e: e[0]):
        if candidate.count != query.count:
            raise ValueError("landmark counts differ across the pool")
        d = float(np.mean(np.linalg.norm(candidate.centered().astype(np.float64) - q, axis=1)))
        if d < best_dist:
            best_id, best_dist = frame_id, d
    return best_id


def _fit_affine(src_points: np.ndarray, dst_points: np.ndarray) -> np.ndarray:
    """Least-squares 2x3 affine mapping src landmarks onto dst landmarks."""
    n = src_points.shape[0]
    a = np.hstack([src_points, np.ones((n, 1), dtype=np.float64)])
    coeffs, *_ = np.linalg.lstsq(a, dst_points.astype(np.float64), rcond=None)
    return coeffs.T.astype(np.float64)  # (2, 3)


def generate_cbi(
    base_image: np.ndarray,
    base_landmarks: LandmarkSet,
    source_image: np.ndarray,
    source_landmarks: LandmarkSet,
    rng_seed: int,
    params: CbiParams = CbiParams(),
    frame_id: str = "",
    source_frame_id: str = "",
    recipe: BlendRecipe | None = None,
) -> BlendfakeSample:
    """Cross-blended pseudo-fake: a landmark-matched different-identity face
    warped onto the base and blended under a deformed hull mask.

    The source is affine-warped so its landmarks land on the base landmarks,
    then color-matched to the base statistics inside the mask. Raises
    WarpBoundsError if the warp leaves uncovered pixels inside the mask.
    """
    if base_landmarks.count != source_landmarks.count:
        raise ValueError("landmark counts must match between base and source")
    rng = np.random.default_rng(rng_seed)
    h, w = base_image.shape[:2]
    affine = _fit_affine(source_landmarks.points, base_landmarks.points)
    warped = cv2.warpAffine(
        source_image, affine, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0
    )
    coverage = cv2.warpAffine(
        np.ones((h, w), dtype=np.float32), affine, (w, h), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
    )
    if recipe is None:
        sigma = max(0.5, params.feather_sigma_frac * min(h, w))
        amp = params.deform_amplitude_frac * min(h, w)
        margin = params.hull_margin_frac * min(h, w)
        mask = build_mask(base_landmarks, base_image.shape, rng, sigma, amp, margin)
        transfer = None
        if params.color_transfer:
            transfer = _mask_color_stats(warped, base_image, mask)
        recipe = BlendRecipe(
            mask=mask,
            blend_ratio=float(rng.uniform(*params.blend_ratio_range)),
            color_transfer=transfer,
            deform_amplitude=amp,
            feather_sigma=sigma,
        )
    if np.any((recipe.mask > 1e-3) & (coverage < 0.999)):
        raise WarpBoundsError("warped source does not cover the blend region")
    source_f32 = warped.astype(np.float32)
    if recipe.color_transfer is not None:
        source_f32 = np.clip(recipe.color_transfer.apply(source_f32), 0, 255)
    image = composite(base_image, source_f32, recipe.mask, recipe.blend_ratio)
    return BlendfakeSample(image=image, kind=AnchorKind.CBI, source_frame_id=source_frame_id, recipe=recipe)


def _mask_color_stats(src: np.ndarray, dst: np.ndarray, mask: np.ndarray) -> ColorTransfer:
    """Channel statistics of src/dst restricted to the mask support."""
    inside = mask > 1e-3
    if not np.any(inside):
        inside = np.ones(mask.shape, dtype=bool)
    s = src[inside].reshape(-1, 3).astype(np.float64)
    d = dst[inside].reshape(-1, 3).astype(np.float64)
    return ColorTransfer(
        src_mean=tuple(s.mean(axis=0)),
        src_std=tuple(s.std(axis=0)),
        dst_mean=tuple(d.mean(axis=0)),
        dst_std=tuple(d.std(axis=0)),
    )


@dataclass(frozen=True)
class AlignedQuad:
    """The four anchors built from one video frame: real, SBI, CBI, deepfake."""

    frame_id: str
    real: np.ndarray
    sbi: BlendfakeSample
    cbi: BlendfakeSample
    deepfake: np.ndarray
    cbi_substituted: bool = False  # True when the CBI slot holds a fallback SBI draw

    KINDS = (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE)

    def images(self) -> list[np.ndarray]:
        return [self.real, self.sbi.image, self.cbi.image, self.deepfake]

    def attribute_labels(self, organization: Organization = Organization.R2B2D) -> list[AttributeLabel]:
        return [attribute_label(kind, organization) for kind in self.KINDS]


@dataclass(frozen=True)
class PoolEntry:
    """One candidate source frame for cross-blending."""

    frame_id: str
    identity_id: str
    landmarks: LandmarkSet
    image: np.ndarray


def build_aligned_quad(
    frame_id: str,
    identity_id: str,
    real_image: np.ndarray,
    landmarks: LandmarkSet,
    deepfake_image: np.ndarray,
    pool: Sequence[PoolEntry],
    rng_seed: int,
    cbi_failure_policy: str = "drop",
    sbi_params: SbiParams = SbiParams(),
    cbi_params: CbiParams = CbiParams(),
) -> AlignedQuad:
    """Assemble {real, SBI, CBI, deepfake} for one frame.

    The CBI source is the landmark-nearest pool entry of a different
    identity. On CBI failure the policy either drops the quad (re-raising,
    the default) or substitutes a second SBI draw, flagged in the quad.
    """
    seeds = np.random.SeedSequence(rng_seed).spawn(3)
    sbi_seed, cbi_seed, fallback_seed = (int(s.generate_state(1)[0]) for s in seeds)
    sbi = generate_sbi(real_image, landmarks, sbi_seed, sbi_params, frame_id=frame_id)
    try:
        candidates = [(e.frame_id, e.landmarks) for e in pool if e.identity_id != identity_id]
        if not candidates:
            raise EmptyPoolError(f"no cross-identity source frames for {frame_id}")
        match_id = find_landmark_match(landmarks, candidates)
        source = next(e for e in pool if e.frame_id == match_id)
        cbi = generate_cbi(
            real_image, landmarks, source.image, source.landmarks, cbi_seed,
            cbi_params, frame_id=frame_id, source_frame_id=match_id,
        )
        substituted = False
    except (EmptyPoolError, DegenerateHullError, WarpBoundsError):
        if cbi_failure_policy == "drop":
            raise
        if cbi_failure_policy != "substitute_sbi":
            raise ValueError(f"unknown CBI failure policy {cbi_failure_policy!r}")
        fallback = generate_sbi(real_image, landmarks, fallback_seed, sbi_params, frame_id=frame_id)
        cbi = replace(fallback, kind=AnchorKind.CBI)
        substituted = True
    return AlignedQuad(
        frame_id=frame_id, real=real_image, sbi=sbi, cbi=cbi,
        deepfake=deepfake_image, cbi_substituted=substituted,
    )
