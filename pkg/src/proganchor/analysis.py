"""Latent-space diagnostics: embedding dumps, perturbed-distance reports,
anchor-ordering statistics, and their plot/CSV emission."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import torch

from .data import FrameRecord
from .errors import ManifestError
from .labels import AnchorKind
from .metrics import mpd, ordering_statistic, perturbed_distance
from .perturb import PerturbationSpec, default_suite, perturb

DUMP_FORMAT = "embedding-dump/v1"


@dataclass
class EmbeddingDump:
    """Per-item embeddings with anchor kinds; d is fixed across a dump."""

    item_ids: list[str]
    kinds: list[AnchorKind]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or len(self.item_ids) != len(self.vectors) or len(self.kinds) != len(self.vectors):
            raise ValueError("dump fields misaligned")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("dump contains non-finite embeddings")

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        legend = ",".join(k.name for k in AnchorKind)
        lines = [f"# {DUMP_FORMAT} d={self.d} count={len(self.vectors)} kinds={legend}"]
        for item, kind, vec in zip(self.item_ids, self.kinds, self.vectors):
            lines.append(",".join([item, kind.name] + [f"{v:.10g}" for v in vec]))
        path.write_text("\n".join(lines) + "\n")

    @staticmethod
    def load(path: str | Path) -> "EmbeddingDump":
        lines = Path(path).read_text().strip().splitlines()
        if not lines or DUMP_FORMAT not in lines[0]:
            raise ManifestError(f"not a recognized embedding dump: {path}")
        item_ids, kinds, rows = [], [], []
        for line in lines[1:]:
            parts = line.split(",")
            item_ids.append(parts[0])
            kinds.append(AnchorKind[parts[1]])
            rows.append([float(v) for v in parts[2:]])
        return EmbeddingDump(item_ids, kinds, np.array(rows))


def _embed_batched(model, images: list[np.ndarray], dtype: torch.dtype, batch: int = 64) -> np.ndarray:
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(images), batch):
            arr = np.stack(images[i : i + batch]).astype(np.float32) / 255.0
            t = torch.from_numpy(arr).permute(0, 3, 1, 2).contiguous().to(dtype)
            outs.append(model.embed(t).double().numpy())
    return np.concatenate(outs, axis=0)


def build_anchor_dump(trainer, records: list[FrameRecord], seed: int = 0) -> tuple[EmbeddingDump, list[np.ndarray]]:
    """Embed all four anchors of each record through the trainer's model.

    Blendfakes are synthesized deterministically from the given seed, with
    the given records as their own cross-blending pool; the underlying anchor
    images are returned alongside the dump so perturbation probes can reuse
    them.
    """
    from .training import QuadSet

    quadset = QuadSet(records, trainer.config.input_size, cbi_failure_policy="drop")
    item_ids, kinds, images = [], [], []
    for rec in quadset.records:
        quad = quadset.build(rec, [seed])
        if quad is None:
            continue
        for kind, img in zip(quad.KINDS, quad.images()):
            item_ids.append(f"{rec.frame_id}_{kind.name.lower()}")
            kinds.append(kind)
            images.append(img)
    vectors = _embed_batched(trainer.model, images, trainer.config.torch_dtype())
    return EmbeddingDump(item_ids, kinds, vectors), images


def latent_report(
    trainer,
    records: list[FrameRecord],
    out_dir: str | Path,
    specs: list[PerturbationSpec] | None = None,
    seed: int = 0,
    formula: str = "difference",
) -> dict:
    """Full latent diagnostics over a record set.

    Writes the embedding dump, a JSON report with per-family and average
    perturbed distances plus the anchor-ordering statistic, and scatter plots
    (anchor layout and per-item perturbed distance) with their CSVs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = default_suite() if specs is None else specs
    dump, images = build_anchor_dump(trainer, records, seed)
    dump.save(out_dir / "embeddings.txt")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    dtype = trainer.config.torch_dtype()
    dim_std = dump.vectors.std(axis=0)
    per_family: dict[str, float] = {}
    per_item_pd = np.zeros(len(images))
    for spec in specs:
        perturbed_vecs = []
        for img in images:
            variants = [perturb(img, spec, rng) for _ in range(spec.repeats)]
            perturbed_vecs.append(_embed_batched(trainer.model, variants, dtype))
        perturbed_arr = np.stack(perturbed_vecs)  # (m, n, d)
        per_family[spec.family.value] = mpd(dump.vectors, perturbed_arr, formula=formula)
        per_item_pd += np.array(
            [perturbed_distance(dump.vectors[j], perturbed_arr[j], dim_std, formula) for j in range(len(images))]
        )
    per_item_pd /= len(specs)
    avg_mpd = float(np.mean(list(per_family.values())))
    ordering = ordering_statistic(dump.kinds, dump.vectors)

    report = {
        "d": dump.d,
        "count": len(dump.vectors),
        "mpd_per_family": per_family,
        "mpd_avg": avg_mpd,
        "ordering_statistic": ordering,
        "formula": formula,
    }
    (out_dir / "latent_report.json").write_text(json.dumps(report, indent=1))
    _write_pd_csv(out_dir / "perturbed_distance.csv", dump, per_item_pd)
    if dump.d == 2:
        _scatter_by_kind(out_dir / "anchor_scatter.png", dump)
        _scatter_pd(out_dir / "pd_scatter.png", dump, per_item_pd)
    return report


def _write_pd_csv(path: Path, dump: EmbeddingDump, per_item_pd: np.ndarray) -> None:
    lines = ["item_id,kind,pd"]
    for item, kind, pd in zip(dump.item_ids, dump.kinds, per_item_pd):
        lines.append(f"{item},{kind.name},{pd:.10g}")
    path.write_text("\n".join(lines) + "\n")


_KIND_COLORS = {
    AnchorKind.REAL: "#2a9d8f",
    AnchorKind.SBI: "#e9c46a",
    AnchorKind.CBI: "#f4a261",
    AnchorKind.DEEPFAKE: "#e76f51",
}


def _scatter_by_kind(path: Path, dump: EmbeddingDump) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for kind in AnchorKind:
        idx = [i for i, k in enumerate(dump.kinds) if k == kind]
        if idx:
            ax.scatter(dump.vectors[idx, 0], dump.vectors[idx, 1], s=8, label=kind.name, color=_KIND_COLORS[kind])
    ax.legend()
    ax.set_title("anchor embeddings")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _scatter_pd(path: Path, dump: EmbeddingDump, per_item_pd: np.ndarray) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 5))
    sc = ax.scatter(dump.vectors[:, 0], dump.vectors[:, 1], c=per_item_pd, s=8, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="perturbed distance")
    ax.set_title("feature regularity")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
