"""End-to-end training: aligned quad batches, feature bridging after warm-up,
loss composition, optimization, checkpointing, and the ablation variants.

Determinism contract: every random draw derives from (config.seed, epoch), so
a run restored from an epoch-boundary checkpoint replays the exact LossReport
stream the uninterrupted run would have produced (CPU, parallelism disabled).
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict, replace
from enum import Enum
from pathlib import Path

import cv2
import numpy as np
import torch

from .bridging import bridge
from .data import FrameRecord, load_frame_images
from .errors import (
    CheckpointError,
    CheckpointMismatchError,
    DegenerateHullError,
    EmptyPoolError,
    TrainingDivergedError,
    WarpBoundsError,
)
from .labels import (
    AnchorKind,
    Organization,
    Strategy,
    detection_label,
    label_for,
    label_table,
    transition_pairs,
)
from .losses import LossReport, LossWeights, detection_loss, multiclass_loss, oriented_loss, overall_loss, transition_loss
from .model import BackboneSpec, ForgeryDetector
from .synthesis import AlignedQuad, CbiParams, PoolEntry, SbiParams, build_aligned_quad

CHECKPOINT_FORMAT = 1


class Variant(Enum):
    """Training variants: the full method and its ablation baselines."""

    FULL = "full"
    BF_ONLY = "bf_only"  # real + blendfakes, plain binary training
    DF_ONLY = "df_only"  # real + deepfake, plain binary training
    VHT = "vht"  # all four kinds, plain binary training (no attribute heads)


_VARIANT_KINDS: dict[Variant, tuple[AnchorKind, ...]] = {
    Variant.FULL: (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE),
    Variant.VHT: (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI, AnchorKind.DEEPFAKE),
    Variant.BF_ONLY: (AnchorKind.REAL, AnchorKind.SBI, AnchorKind.CBI),
    Variant.DF_ONLY: (AnchorKind.REAL, AnchorKind.DEEPFAKE),
}


@dataclass(frozen=True)
class RunConfig:
    """Every training knob; hashed into each checkpoint."""

    strategy: Strategy = Strategy.TRIPLET_BINARY
    organization: Organization = Organization.R2B2D
    variant: Variant = Variant.FULL
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 2e-4
    epochs: int = 20
    batch_quads: int = 6
    input_size: tuple[int, int] = (256, 256)
    warmup_epochs: int = 2
    seed: int = 0
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    pairs_per_quad: int = 3
    augment: bool = True
    dtype: str = "float32"
    cbi_failure_policy: str = "drop"
    parallel_workers: int = 0

    def resolved_backbone(self) -> BackboneSpec:
        """Backbone spec with the run's input size applied."""
        return replace(self.backbone, input_size=tuple(self.input_size))

    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]

    def anchor_kinds(self) -> tuple[AnchorKind, ...]:
        return _VARIANT_KINDS[self.variant]


def config_to_dict(config: RunConfig) -> dict:
    d = asdict(config)
    d["strategy"] = config.strategy.value
    d["organization"] = config.organization.value
    d["variant"] = config.variant.value
    d["input_size"] = list(config.input_size)
    d["backbone"]["input_size"] = list(config.backbone.input_size)
    d["backbone"]["stage_channels"] = list(config.backbone.stage_channels)
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    d["strategy"] = Strategy(d.get("strategy", Strategy.TRIPLET_BINARY.value))
    d["organization"] = Organization(d.get("organization", Organization.R2B2D.value))
    d["variant"] = Variant(d.get("variant", Variant.FULL.value))
    d["weights"] = LossWeights(**d.get("weights", {}))
    bb = dict(d.get("backbone", {}))
    bb["input_size"] = tuple(bb.get("input_size", (256, 256)))
    bb["stage_channels"] = tuple(bb.get("stage_channels", (16, 32, 64, 64)))
    d["backbone"] = BackboneSpec(**bb)
    d["input_size"] = tuple(d.get("input_size", (256, 256)))
    return RunConfig(**d)


def config_hash(config: RunConfig) -> str:
    return hashlib.sha256(json.dumps(config_to_dict(config), sort_keys=True).encode()).hexdigest()


def _structural_dict(config: RunConfig) -> dict:
    d = config_to_dict(config)
    d.pop("epochs", None)  # training longer is the one legal difference on resume
    return d


@dataclass
class TrainState:
    """Progress markers; all in-epoch randomness derives from (seed, epoch)."""

    epoch: int = 0
    step: int = 0
    seed: int = 0


# ---------------------------------------------------------------------------
# Augmentation (shared parameters across the members of one quad)
# ---------------------------------------------------------------------------


def draw_augment_params(rng: np.random.Generator) -> dict:
    return {
        "jpeg_q": int(rng.integers(40, 96)) if rng.uniform() < 0.5 else None,
        "bc": (float(rng.uniform(0.85, 1.15)), float(rng.uniform(-15, 15))) if rng.uniform() < 0.5 else None,
        "angle": float(rng.uniform(-8, 8)) if rng.uniform() < 0.5 else None,
        "median_k": int(rng.choice([3, 5])) if rng.uniform() < 0.5 else None,
    }


def augment_image(image: np.ndarray, params: dict) -> np.ndarray:
    out = image
    if params.get("jpeg_q") is not None:
        ok, buf = cv2.imencode(".jpg", cv2.cvtColor(out, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, params["jpeg_q"]])
        out = cv2.cvtColor(cv2.imdecode(buf, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)
    if params.get("bc") is not None:
        alpha, beta = params["bc"]
        out = np.clip(out.astype(np.float32) * alpha + beta, 0, 255).astype(np.uint8)
    if params.get("angle") is not None:
        h, w = out.shape[:2]
        m = cv2.getRotationMatrix2D((w / 2, h / 2), params["angle"], 1.0)
        out = cv2.warpAffine(out, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE)
    if params.get("median_k") is not None:
        out = cv2.medianBlur(out, params["median_k"])
    return out


# ---------------------------------------------------------------------------
# Quad building over a cached record set
# ---------------------------------------------------------------------------


class QuadSet:
    """Caches a record set's images and landmarks and builds aligned quads.

    The record set itself is the cross-blending source pool, so train and
    evaluation sets never leak into each other's quads.
    """

    def __init__(self, records: list[FrameRecord], input_size: tuple[int, int], cbi_failure_policy: str = "drop"):
        if not records:
            raise ValueError("empty record set")
        self.records = sorted(records, key=lambda r: r.frame_id)
        self.input_size = tuple(input_size)
        self.policy = cbi_failure_policy
        self.dropped = 0
        self._index = {rec.frame_id: i for i, rec in enumerate(self.records)}
        self._cache: dict[str, tuple[np.ndarray, np.ndarray, object]] = {}
        self._pool: list[PoolEntry] = []
        for rec in self.records:
            real, fake, lms = load_frame_images(rec)
            if real.shape[:2] != self.input_size:
                real = cv2.resize(real, self.input_size[::-1])
                fake = cv2.resize(fake, self.input_size[::-1])
            self._cache[rec.frame_id] = (real, fake, lms)
            self._pool.append(PoolEntry(frame_id=rec.frame_id, identity_id=rec.identity_id, landmarks=lms, image=real))

    def images(self, frame_id: str) -> tuple[np.ndarray, np.ndarray]:
        real, fake, _ = self._cache[frame_id]
        return real, fake

    def build(self, rec: FrameRecord, seed_key: list[int]) -> AlignedQuad | None:
        """Build the quad for one record; None when the quad is dropped."""
        real, fake, lms = self._cache[rec.frame_id]
        seed = int(np.random.SeedSequence(list(seed_key) + [self._index[rec.frame_id]]).generate_state(1)[0])
        try:
            return build_aligned_quad(
                rec.frame_id, rec.identity_id, real, lms, fake, self._pool, seed,
                cbi_failure_policy=self.policy,
            )
        except (EmptyPoolError, DegenerateHullError, WarpBoundsError):
            self.dropped += 1
            return None


# ---------------------------------------------------------------------------
# Trainer
# ---------------------------------------------------------------------------


class Trainer:
    """Owns the model, optimizer, data cache and the training loop."""

    def __init__(self, config: RunConfig, records: list[FrameRecord], out_dir: str | Path):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.quadset = QuadSet(records, config.input_size, config.cbi_failure_policy)
        self.records = self.quadset.records
        self.state = TrainState(seed=config.seed)
        torch.manual_seed(config.seed)  # parameter init
        self.model = ForgeryDetector(config.resolved_backbone(), config.strategy).to(config.torch_dtype())
        self.optimizer = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate)
        self.reports: list[LossReport] = []
        self._log_path = self.out_dir / "train_log.jsonl"
        self._summary_path = self.out_dir / "epoch_summary.csv"

    @property
    def dropped_quads(self) -> int:
        return self.quadset.dropped

    def _build_quad(self, rec: FrameRecord, epoch: int) -> AlignedQuad | None:
        return self.quadset.build(rec, [self.config.seed, epoch])

    # -- epoch loop -----------------------------------------------------------

    def _epoch_rngs(self, epoch: int) -> tuple[np.random.Generator, torch.Generator]:
        ss = np.random.SeedSequence([self.config.seed, epoch])
        np_seed, torch_seed = ss.spawn(2)
        gen = torch.Generator()
        gen.manual_seed(int(torch_seed.generate_state(1, np.uint64)[0] >> 1))
        return np.random.default_rng(np_seed), gen

    def train(self, epochs: int | None = None) -> list[LossReport]:
        """Run (remaining) epochs; returns the reports of this call."""
        target = self.config.epochs if epochs is None else epochs
        new_reports: list[LossReport] = []
        while self.state.epoch < target:
            new_reports.extend(self.train_epoch())
        return new_reports

    def train_epoch(self) -> list[LossReport]:
        epoch = self.state.epoch
        cfg = self.config
        rng, gen = self._epoch_rngs(epoch)
        order = rng.permutation(len(self.records))
        reports: list[LossReport] = []
        self.model.train()
        bridging_on = cfg.variant is Variant.FULL and epoch >= cfg.warmup_epochs
        for start in range(0, len(order), cfg.batch_quads):
            frame_idx = order[start : start + cfg.batch_quads]
            frames = [self.records[i] for i in frame_idx]
            report = self._train_step(frames, epoch, rng, gen, bridging_on)
            if report is not None:
                reports.append(report)
        self.state.epoch += 1
        self._write_summary(epoch, reports)
        self.reports.extend(reports)
        with self._log_path.open("a") as fh:
            for r in reports:
                fh.write(r.to_json() + "\n")
        return reports

    def _train_step(
        self,
        frames: list[FrameRecord],
        epoch: int,
        rng: np.random.Generator,
        gen: torch.Generator,
        bridging_on: bool,
    ) -> LossReport | None:
        cfg = self.config
        kinds = cfg.anchor_kinds()
        if cfg.parallel_workers > 0:
            with ThreadPoolExecutor(max_workers=cfg.parallel_workers) as pool:
                quads = list(pool.map(lambda r: self._build_quad(r, epoch), frames))
        else:
            quads = [self._build_quad(r, epoch) for r in frames]
        quads = [q for q in quads if q is not None]
        if not quads:
            return None

        images, det_labels, attr_rows = [], [], []
        for quad in quads:
            by_kind = dict(zip(AlignedQuad.KINDS, quad.images()))
            aug = draw_augment_params(rng) if cfg.augment else None
            for kind in kinds:
                img = by_kind[kind]
                if aug is not None:
                    img = augment_image(img, aug)
                images.append(img)
                det_labels.append(detection_label(kind))
                attr_rows.append(label_for(kind, cfg.strategy, cfg.organization))
        batch = self._to_tensor(np.stack(images))
        y = torch.as_tensor(det_labels, dtype=cfg.torch_dtype())

        feats = self.model.encode(batch)
        n_kinds = len(kinds)
        n_quads = len(quads)
        feats_by_kind = {k: feats.view(n_quads, n_kinds, *feats.shape[1:])[:, i] for i, k in enumerate(kinds)}

        if cfg.variant is Variant.FULL:
            attr_pred = self.model.classify_attributes(feats)
            attention = self.model.project_attention(attr_pred)
            scores = self.model.detect(feats, attention)
            l_d = detection_loss(scores, y)

            anchor_targets = torch.as_tensor(np.stack(attr_rows), dtype=cfg.torch_dtype())
            preds, targets = [attr_pred], [anchor_targets]
            n_bridged = 0
            if bridging_on:
                bridged_feats, bridged_labels = [], []
                for q in range(n_quads):
                    quad_feats = {k: feats_by_kind[k][q] for k in kinds}
                    quad_labels = {k: label_for(k, cfg.strategy, cfg.organization) for k in kinds}
                    for sample in bridge(
                        quad_feats, quad_labels, rng, cfg.pairs_per_quad, cfg.organization,
                    ):
                        bridged_feats.append(sample.feature)
                        bridged_labels.append(sample.label)
                n_bridged = len(bridged_feats)
                if n_bridged:
                    bridged_pred = self.model.classify_attributes(torch.stack(bridged_feats))
                    preds.append(bridged_pred)
                    targets.append(torch.as_tensor(np.stack(bridged_labels), dtype=cfg.torch_dtype()))
            all_pred = torch.cat(preds)
            all_target = torch.cat(targets)
            attr_loss = multiclass_loss if cfg.strategy is Strategy.MULTI_CLASS else oriented_loss
            l_o = attr_loss(all_pred, all_target)

            pairs = [
                (feats_by_kind[src], feats_by_kind[dst])
                for src, dst in transition_pairs(cfg.organization)
            ]
            l_t = transition_loss(pairs, self.model.transition_mapper, gen)
        else:
            scores = self.model.detect(feats)
            l_d = detection_loss(scores, y)
            l_o = torch.zeros((), dtype=cfg.torch_dtype())
            l_t = torch.zeros((), dtype=cfg.torch_dtype())
            n_bridged = 0

        total = overall_loss(l_d, l_o, l_t, cfg.weights)
        if not torch.isfinite(total):
            ids = [q.frame_id for q in quads]
            (self.out_dir / "diverged_batch.json").write_text(json.dumps({"epoch": epoch, "frame_ids": ids}))
            raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", frame_ids=ids)
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.state.step += 1
        return LossReport(
            epoch=epoch,
            step=self.state.step,
            l_d=float(l_d.detach()),
            l_o=float(l_o.detach()),
            l_t=float(l_t.detach()),
            l_overall=float(total.detach()),
            n_bridged=n_bridged,
            n_images=len(images),
        )

    def _to_tensor(self, images: np.ndarray) -> torch.Tensor:
        arr = images.astype(np.float32) / 255.0
        t = torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous()
        return t.to(self.config.torch_dtype())

    def _write_summary(self, epoch: int, reports: list[LossReport]) -> None:
        exists = self._summary_path.exists()
        with self._summary_path.open("a", newline="") as fh:
            writer = csv.writer(fh)
            if not exists:
                writer.writerow(["epoch", "mean_l_d", "mean_l_o", "mean_l_t", "mean_l_overall", "n_bridged", "n_steps"])
            if reports:
                writer.writerow(
                    [
                        epoch,
                        float(np.mean([r.l_d for r in reports])),
                        float(np.mean([r.l_o for r in reports])),
                        float(np.mean([r.l_t for r in reports])),
                        float(np.mean([r.l_overall for r in reports])),
                        int(np.sum([r.n_bridged for r in reports])),
                        len(reports),
                    ]
                )

    # -- inference ------------------------------------------------------------

    def score_records(self, records: list[FrameRecord]) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
        """Detection scores of the real and deepfake image of each record."""
        self.model.eval()
        item_ids, video_ids, scores, labels = [], [], [], []
        use_attention = self.config.variant is Variant.FULL
        with torch.no_grad():
            for batch_start in range(0, len(records), 32):
                chunk = records[batch_start : batch_start + 32]
                imgs, metas = [], []
                for rec in chunk:
                    if rec.frame_id in self.quadset._cache:
                        real, fake = self.quadset.images(rec.frame_id)
                    else:
                        real, fake, _ = load_frame_images(rec)
                    for img, label, tag in ((real, 0, "real"), (fake, 1, "fake")):
                        if img.shape[:2] != tuple(self.config.input_size):
                            img = cv2.resize(img, tuple(self.config.input_size)[::-1])
                        imgs.append(img)
                        metas.append((f"{rec.frame_id}_{tag}", rec.video_id + ("_f" if label else "_r"), label))
                batch = self._to_tensor(np.stack(imgs))
                s, *_ = self.model(batch, use_attention=use_attention)
                for (item, vid, label), val in zip(metas, s.tolist()):
                    item_ids.append(item)
                    video_ids.append(vid)
                    scores.append(val)
                    labels.append(label)
        return item_ids, video_ids, np.array(scores), np.array(labels)

    # -- checkpointing ----------------------------------------------------------

    def save_checkpoint(self, path: str | Path) -> None:
        payload = {
            "format_version": CHECKPOINT_FORMAT,
            "config": config_to_dict(self.config),
            "config_hash": config_hash(self.config),
            "label_table": label_table(self.config.organization),
            "epoch": self.state.epoch,
            "step": self.state.step,
            "dropped_quads": self.dropped_quads,
            "model_state": self.model.state_dict(),
            "optimizer_state": self.optimizer.state_dict(),
        }
        torch.save(payload, path)

    @classmethod
    def restore(
        cls,
        path: str | Path,
        records: list[FrameRecord],
        out_dir: str | Path,
        config: RunConfig | None = None,
    ) -> "Trainer":
        """Rebuild a trainer from a checkpoint.

        A config passed in must structurally match the stored one (only the
        epoch budget may differ); mismatches refuse loudly.
        """
        try:
            payload = torch.load(path, weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if payload.get("format_version") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {payload.get('format_version')!r}")
        stored = config_from_dict(payload["config"])
        if config is not None and _structural_dict(config) != _structural_dict(stored):
            diffs = [
                k for k in _structural_dict(config)
                if _structural_dict(config)[k] != _structural_dict(stored).get(k)
            ]
            raise CheckpointMismatchError(f"config mismatch on {diffs}")
        run_config = stored if config is None else config
        trainer = cls(run_config, records, out_dir)
        trainer.model.load_state_dict(payload["model_state"])
        trainer.optimizer.load_state_dict(payload["optimizer_state"])
        trainer.state = TrainState(epoch=payload["epoch"], step=payload["step"], seed=run_config.seed)
        trainer.quadset.dropped = payload.get("dropped_quads", 0)
        return trainer
