"""Dataset manifests and the procedural desk-scale dataset generator.

The desk generator renders paired "real" / "pseudo-deepfake" frames with
three independently controllable forgery cues (blending boundary, identity
texture mismatch, high-frequency artifacts) so small-scale runs exercise the
same attribute semantics as benchmark data would.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import cv2
import numpy as np

from .errors import ManifestError
from .synthesis import LandmarkSet

MANIFEST_FORMAT = "frame-manifest/v1"


@dataclass(frozen=True)
class FrameRecord:
    """One aligned frame: a real image, its manipulated counterpart, landmarks."""

    frame_id: str
    video_id: str
    identity_id: str
    real_path: str
    deepfake_path: str
    landmark_path: str
    split: str  # "train" or "test"


def save_manifest(records: list[FrameRecord], path: str | Path) -> None:
    path = Path(path)
    payload = {"format": MANIFEST_FORMAT, "frames": [asdict(r) for r in records]}
    path.write_text(json.dumps(payload, indent=1))


def load_manifest(path: str | Path) -> list[FrameRecord]:
    """Load and validate a frame manifest.

    Rejects unknown format tags, duplicate frame ids, missing referenced
    files (all misses listed in one error), and videos that straddle splits.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if payload.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"unsupported manifest format {payload.get('format')!r}")
    base = path.parent
    records, seen = [], set()
    for row in payload.get("frames", []):
        rec = FrameRecord(**row)
        if rec.frame_id in seen:
            raise ManifestError(f"duplicate frame_id {rec.frame_id!r}")
        seen.add(rec.frame_id)
        rec = FrameRecord(
            frame_id=rec.frame_id, video_id=rec.video_id, identity_id=rec.identity_id,
            real_path=str((base / rec.real_path).resolve()),
            deepfake_path=str((base / rec.deepfake_path).resolve()),
            landmark_path=str((base / rec.landmark_path).resolve()),
            split=rec.split,
        )
        records.append(rec)
    missing = [
        p for r in records for p in (r.real_path, r.deepfake_path, r.landmark_path) if not Path(p).exists()
    ]
    if missing:
        raise ManifestError("manifest references missing files: " + ", ".join(sorted(set(missing))))
    split_of_video: dict[str, str] = {}
    for r in records:
        prev = split_of_video.setdefault(r.video_id, r.split)
        if prev != r.split:
            raise ManifestError(f"video {r.video_id!r} appears in both splits")
    return records


def load_frame_images(record: FrameRecord) -> tuple[np.ndarray, np.ndarray, LandmarkSet]:
    """Read the real image, deepfake image and landmarks of one record (RGB)."""
    real = cv2.cvtColor(cv2.imread(record.real_path, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)
    fake = cv2.cvtColor(cv2.imread(record.deepfake_path, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)
    return real, fake, LandmarkSet.load(record.landmark_path)


# ---------------------------------------------------------------------------
# Desk-scale procedural dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeskDataSpec:
    """Size, seed and cue strengths of the procedural dataset.

    ``test_*`` fields override the corresponding cue for the held-out split;
    leaving them None keeps the training value. Shifting only the artifact
    style/amplitude between splits emulates cross-dataset generalization:
    blending and identity cues stay stable while the generator fingerprint
    changes.
    """

    n_identities: int = 8
    videos_per_identity: int = 2
    frames_per_video: int = 8
    image_size: int = 64
    seed: int = 0
    blend_strength: float = 0.6
    identity_mismatch: float = 0.6
    artifact_amplitude: float = 0.6
    artifact_style: str = "checker"  # checker | stripes | blobs
    test_fraction: float = 0.25
    test_blend_strength: float | None = None
    test_identity_mismatch: float | None = None
    test_artifact_amplitude: float | None = None
    test_artifact_style: str | None = None

    def cue_for_split(self, split: str) -> tuple[float, float, float, str]:
        if split == "test":
            return (
                self.blend_strength if self.test_blend_strength is None else self.test_blend_strength,
                self.identity_mismatch if self.test_identity_mismatch is None else self.test_identity_mismatch,
                self.artifact_amplitude if self.test_artifact_amplitude is None else self.test_artifact_amplitude,
                self.artifact_style if self.test_artifact_style is None else self.test_artifact_style,
            )
        return (self.blend_strength, self.identity_mismatch, self.artifact_amplitude, self.artifact_style)


@dataclass(frozen=True)
class _Identity:
    skin: np.ndarray  # base RGB color
    texture_freq: np.ndarray  # (2, 3) spatial frequencies per channel
    texture_phase: np.ndarray  # (3,)
    texture_amp: float
    face_scale: tuple[float, float]


def _make_identity(rng: np.random.Generator) -> _Identity:
    return _Identity(
        skin=rng.uniform(110, 200, size=3),
        texture_freq=rng.uniform(0.05, 0.18, size=(2, 3)),
        texture_phase=rng.uniform(0, 2 * math.pi, size=3),
        texture_amp=rng.uniform(8, 18),
        face_scale=(rng.uniform(0.30, 0.36), rng.uniform(0.38, 0.44)),
    )


def _texture_field(identity: _Identity, size: int) -> np.ndarray:
    """Identity-specific low-frequency texture, zero-mean, (h, w, 3)."""
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float32)
    out = np.zeros((size, size, 3), dtype=np.float32)
    for c in range(3):
        fx, fy = identity.texture_freq[0, c], identity.texture_freq[1, c]
        out[..., c] = identity.texture_amp * np.sin(fx * xs + fy * ys + identity.texture_phase[c])
    return out


def canonical_landmarks(size: int, cx: float, cy: float, rx: float, ry: float, angle: float = 0.0) -> LandmarkSet:
    """An 81-point face template: jaw (17), forehead (13), brows (2x5),
    eyes (2x6), nose (9), mouth (20), posed by center/radii/rotation."""
    pts: list[tuple[float, float]] = []
    # jaw: lower half of the face ellipse, left to right
    for t in np.linspace(math.pi, 2 * math.pi, 17):
        pts.append((math.cos(t), -math.sin(t)))
    # forehead arc: upper ellipse
    for t in np.linspace(0.15 * math.pi, 0.85 * math.pi, 13):
        pts.append((math.cos(t), -math.sin(t) * 0.95))
    # brows
    for side in (-1, 1):
        for t in np.linspace(-0.35, 0.35, 5):
            pts.append((side * 0.45 + t * side, -0.45 + 0.08 * abs(t)))
    # eyes: small hexagons
    for side in (-1, 1):
        for t in np.linspace(0, 2 * math.pi, 6, endpoint=False):
            pts.append((side * 0.42 + 0.13 * math.cos(t), -0.22 + 0.08 * math.sin(t)))
    # nose: bridge + base
    for t in np.linspace(-0.2, 0.35, 5):
        pts.append((0.0, t))
    for t in np.linspace(-0.18, 0.18, 4):
        pts.append((t, 0.40))
    # mouth: two ellipse rings
    for t in np.linspace(0, 2 * math.pi, 12, endpoint=False):
        pts.append((0.30 * math.cos(t), 0.62 + 0.12 * math.sin(t)))
    for t in np.linspace(0, 2 * math.pi, 8, endpoint=False):
        pts.append((0.20 * math.cos(t), 0.62 + 0.07 * math.sin(t)))
    unit = np.array(pts, dtype=np.float32)
    assert unit.shape[0] == 81
    ca, sa = math.cos(angle), math.sin(angle)
    x = unit[:, 0] * rx * size
    y = unit[:, 1] * ry * size
    xr = ca * x - sa * y + cx * size
    yr = sa * x + ca * y + cy * size
    coords = np.stack([xr, yr], axis=1)
    return LandmarkSet(np.clip(coords, 0, size - 1))


def _render_face(identity: _Identity, size: int, pose: tuple[float, float, float], video_tone: np.ndarray) -> tuple[np.ndarray, LandmarkSet]:
    """Render one frame: background gradient, elliptical face, features."""
    cx, cy, angle = pose
    rx, ry = identity.face_scale
    img = np.zeros((size, size, 3), dtype=np.float32)
    grad = np.linspace(0, 40, size, dtype=np.float32)[:, None]
    img += video_tone[None, None, :] + grad[..., None]
    lms = canonical_landmarks(size, cx, cy, rx, ry, angle)
    face = np.zeros((size, size), dtype=np.float32)
    cv2.ellipse(
        face, (int(cx * size), int(cy * size)), (int(rx * size), int(ry * size)),
        math.degrees(angle), 0, 360, 1.0, -1,
    )
    face3 = face[..., None]
    textured = identity.skin[None, None, :] + _texture_field(identity, size)
    img = img * (1 - face3) + textured * face3
    # features: darker patches at the template's eye/mouth positions
    pts = lms.points
    for center in (pts[40:46].mean(axis=0), pts[46:52].mean(axis=0)):  # eyes
        cv2.circle(img, (int(center[0]), int(center[1])), max(1, size // 24), (40, 35, 35), -1)
    mouth = pts[61:73].mean(axis=0)
    cv2.ellipse(img, (int(mouth[0]), int(mouth[1])), (size // 12, size // 28),
                math.degrees(angle), 0, 360, (90, 45, 45), -1)
    nose = pts[52:61].mean(axis=0)
    cv2.circle(img, (int(nose[0]), int(nose[1])), max(1, size // 36), (120, 90, 80), -1)
    return np.clip(img, 0, 255), lms


def _artifact_pattern(style: str, size: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean high-frequency pattern standing in for generator fingerprints."""
    ys, xs = np.mgrid[0:size, 0:size]
    if style == "checker":
        period = max(2, size // 16)
        pat = (((xs // period) + (ys // period)) % 2).astype(np.float32) * 2 - 1
    elif style == "stripes":
        freq = 2 * math.pi / max(3, size // 10)
        pat = np.sin(freq * (xs + 0.5 * ys)).astype(np.float32)
    elif style == "blobs":
        noise = rng.normal(0, 1, size=(size // 4, size // 4)).astype(np.float32)
        pat = cv2.resize(noise, (size, size), interpolation=cv2.INTER_CUBIC)
        pat /= max(1e-6, np.abs(pat).max())
    else:
        raise ValueError(f"unknown artifact style {style!r}")
    return pat[..., None].repeat(3, axis=2)


def _apply_forgery_cues(
    real_f32: np.ndarray,
    lms: LandmarkSet,
    donor: _Identity,
    cues: tuple[float, float, float, str],
    rng: np.random.Generator,
) -> np.ndarray:
    """Inject the three cue families inside the face hull, each scaled by its strength."""
    blend_s, ident_s, artifact_s, style = cues
    if blend_s == 0 and ident_s == 0 and artifact_s == 0:
        return real_f32.copy()
    size = real_f32.shape[0]
    hull = np.zeros((size, size), dtype=np.float32)
    cv2.fillConvexPoly(hull, cv2.convexHull(lms.points).astype(np.int32).reshape(-1, 2), 1.0)
    out = real_f32.copy()
    if ident_s > 0:
        interior = cv2.erode(hull, np.ones((size // 16 | 1, size // 16 | 1), np.uint8))
        donor_tex = _texture_field(donor, size)
        own_tex = out - cv2.GaussianBlur(out, (0, 0), max(1.0, size / 16))
        swap = donor_tex - own_tex
        out += ident_s * interior[..., None] * swap
    if blend_s > 0:
        dist = cv2.distanceTransform((hull > 0).astype(np.uint8), cv2.DIST_L2, 3)
        band_width = max(1.5, size / 24)
        ring = np.exp(-((dist - band_width) ** 2) / (2 * (band_width / 2) ** 2)) * (hull > 0)
        ring_color = np.array([18.0, 12.0, -14.0], dtype=np.float32)
        out += blend_s * ring[..., None] * ring_color[None, None, :]
    if artifact_s > 0:
        pat = _artifact_pattern(style, size, rng)
        out += artifact_s * 14.0 * hull[..., None] * pat
    return np.clip(out, 0, 255)


def synth_desk_dataset(spec: DeskDataSpec, out_dir: str | Path) -> Path:
    """Generate the procedural dataset and return the manifest path.

    Deterministic given the spec seed: identical specs produce identical
    bytes. With all cue strengths zero the "deepfake" files are pixel-
    identical to the real ones.
    """
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "landmarks").mkdir(parents=True, exist_ok=True)
    root_rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    identities = [_make_identity(root_rng) for _ in range(spec.n_identities)]
    size = spec.image_size

    records: list[FrameRecord] = []
    n_videos = spec.n_identities * spec.videos_per_identity
    n_test = max(1, int(round(spec.test_fraction * n_videos)))
    # spread test videos across identities so both splits keep several
    # identities (the CBI pool needs cross-identity frames)
    stride = max(1, n_videos // n_test)
    test_videos = set(list(range(0, n_videos, stride))[:n_test])
    video_index = 0
    for ident_idx, identity in enumerate(identities):
        donor = identities[(ident_idx + 1) % len(identities)]
        for v in range(spec.videos_per_identity):
            split = "test" if video_index in test_videos else "train"
            video_id = f"id{ident_idx:03d}_v{v:02d}"
            video_rng = np.random.default_rng(np.random.SeedSequence([spec.seed, ident_idx, v]))
            tone = video_rng.uniform(20, 70, size=3).astype(np.float32)
            cues = spec.cue_for_split(split)
            for f in range(spec.frames_per_video):
                pose = (
                    0.5 + video_rng.uniform(-0.03, 0.03),
                    0.5 + video_rng.uniform(-0.03, 0.03),
                    video_rng.uniform(-0.06, 0.06),
                )
                real_f32, lms = _render_face(identity, size, pose, tone)
                noise = video_rng.normal(0, 2.0, size=real_f32.shape).astype(np.float32)
                real_f32 = np.clip(real_f32 + noise, 0, 255)
                fake_f32 = _apply_forgery_cues(real_f32, lms, donor, cues, video_rng)
                frame_id = f"{video_id}_f{f:03d}"
                real_name = f"images/{frame_id}_real.png"
                fake_name = f"images/{frame_id}_fake.png"
                lm_name = f"landmarks/{frame_id}.txt"
                cv2.imwrite(str(out_dir / real_name), cv2.cvtColor(real_f32.astype(np.uint8), cv2.COLOR_RGB2BGR))
                cv2.imwrite(str(out_dir / fake_name), cv2.cvtColor(fake_f32.astype(np.uint8), cv2.COLOR_RGB2BGR))
                lms.save(out_dir / lm_name)
                records.append(
                    FrameRecord(
                        frame_id=frame_id, video_id=video_id, identity_id=f"id{ident_idx:03d}",
                        real_path=real_name, deepfake_path=fake_name, landmark_path=lm_name, split=split,
                    )
                )
            video_index += 1
    manifest_path = out_dir / "manifest.json"
    save_manifest(records, manifest_path)
    return manifest_path
