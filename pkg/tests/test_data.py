import json
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np
import pytest

from proganchor.data import (
    DeskDataSpec,
    FrameRecord,
    canonical_landmarks,
    load_frame_images,
    load_manifest,
    save_manifest,
    synth_desk_dataset,
)
from proganchor.errors import ManifestError
from proganchor.metrics import auc


def test_canonical_landmarks_count_and_bounds():
    lms = canonical_landmarks(64, 0.5, 0.5, 0.32, 0.42)
    assert lms.count == 81
    lms.validate_bounds((64, 64, 3))


def test_empty_manifest_round_trip(tmp_path):
    path = tmp_path / "manifest.json"
    save_manifest([], path)
    assert load_manifest(path) == []


def test_manifest_duplicate_frame_id_rejected(tmp_path):
    rec = {
        "frame_id": "f0", "video_id": "v0", "identity_id": "i0",
        "real_path": "r.png", "deepfake_path": "d.png", "landmark_path": "l.txt", "split": "train",
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format": "frame-manifest/v1", "frames": [rec, rec]}))
    with pytest.raises(ManifestError, match="f0"):
        load_manifest(path)


def test_manifest_missing_files_all_listed(tmp_path):
    frames = []
    for i in range(3):
        frames.append(
            {
                "frame_id": f"f{i}", "video_id": f"v{i}", "identity_id": "i0",
                "real_path": f"missing_{i}.png", "deepfake_path": f"missing_{i}.png",
                "landmark_path": f"missing_{i}.txt", "split": "train",
            }
        )
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format": "frame-manifest/v1", "frames": frames}))
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    for i in range(3):
        assert f"missing_{i}" in str(err.value)


def test_manifest_unknown_format_rejected(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format": "something-else", "frames": []}))
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_manifest_split_hygiene(tmp_path):
    img = tmp_path / "x.png"
    cv2.imwrite(str(img), np.zeros((4, 4, 3), np.uint8))
    lm = tmp_path / "x.txt"
    lm.write_text("1 1\n2 2\n")
    frames = [
        {"frame_id": "f0", "video_id": "v0", "identity_id": "i0",
         "real_path": "x.png", "deepfake_path": "x.png", "landmark_path": "x.txt", "split": "train"},
        {"frame_id": "f1", "video_id": "v0", "identity_id": "i0",
         "real_path": "x.png", "deepfake_path": "x.png", "landmark_path": "x.txt", "split": "test"},
    ]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"format": "frame-manifest/v1", "frames": frames}))
    with pytest.raises(ManifestError, match="both splits"):
        load_manifest(path)


# ---------------------------------------------------------------------------
# desk dataset generator
# ---------------------------------------------------------------------------


def small_spec(**kw):
    base = dict(n_identities=3, videos_per_identity=2, frames_per_video=2, image_size=48, seed=5)
    base.update(kw)
    return DeskDataSpec(**base)


def test_desk_dataset_zero_cues_means_identical_pairs(tmp_path):
    spec = small_spec(blend_strength=0.0, identity_mismatch=0.0, artifact_amplitude=0.0)
    manifest = synth_desk_dataset(spec, tmp_path)
    for rec in load_manifest(manifest):
        real, fake, _ = load_frame_images(rec)
        assert np.array_equal(real, fake)


def test_desk_dataset_deterministic(tmp_path):
    spec = small_spec()
    m1 = synth_desk_dataset(spec, tmp_path / "a")
    m2 = synth_desk_dataset(spec, tmp_path / "b")
    recs1, recs2 = load_manifest(m1), load_manifest(m2)
    assert [r.frame_id for r in recs1] == [r.frame_id for r in recs2]
    for r1, r2 in zip(recs1, recs2):
        assert Path(r1.real_path).read_bytes() == Path(r2.real_path).read_bytes()
        assert Path(r1.deepfake_path).read_bytes() == Path(r2.deepfake_path).read_bytes()


def test_desk_dataset_structure(tmp_path):
    manifest = synth_desk_dataset(small_spec(), tmp_path)
    records = load_manifest(manifest)
    assert len(records) == 3 * 2 * 2
    assert {r.split for r in records} == {"train", "test"}
    train_idents = {r.identity_id for r in records if r.split == "train"}
    assert len(train_idents) >= 2  # cross-identity blending pool must exist
    for rec in records[:3]:
        real, fake, lms = load_frame_images(rec)
        assert real.shape == (48, 48, 3)
        assert lms.count == 81
        lms.validate_bounds(real.shape)


def high_frequency_energy(image):
    gray = cv2.cvtColor(image, cv2.COLOR_RGB2GRAY).astype(np.float32)
    return float(np.mean(np.abs(cv2.Laplacian(gray, cv2.CV_32F))))


def test_artifact_strength_sweep_monotone_baseline_auc(tmp_path):
    """A fixed pixel-statistics classifier separates real/fake better as the
    artifact cue strengthens."""
    aucs = []
    for i, amp in enumerate([0.0, 0.5, 1.5]):
        spec = small_spec(
            n_identities=4, frames_per_video=3, seed=21,
            blend_strength=0.0, identity_mismatch=0.0, artifact_amplitude=amp,
        )
        manifest = synth_desk_dataset(spec, tmp_path / f"sweep{i}")
        scores, labels = [], []
        for rec in load_manifest(manifest):
            real, fake, _ = load_frame_images(rec)
            scores += [high_frequency_energy(real), high_frequency_energy(fake)]
            labels += [0, 1]
        aucs.append(auc(np.array(scores), np.array(labels)))
    assert aucs[0] == pytest.approx(0.5, abs=0.15)  # identical pairs -> chance
    assert aucs[0] < aucs[1] < aucs[2]
    assert aucs[2] > 0.9


def test_desk_dataset_test_split_cue_shift(tmp_path):
    spec = small_spec(test_artifact_style="stripes", test_artifact_amplitude=0.2)
    manifest = synth_desk_dataset(spec, tmp_path)
    records = load_manifest(manifest)
    assert spec.cue_for_split("train")[3] == "checker"
    assert spec.cue_for_split("test")[3] == "stripes"
    assert spec.cue_for_split("test")[2] == 0.2
    assert any(r.split == "test" for r in records)
