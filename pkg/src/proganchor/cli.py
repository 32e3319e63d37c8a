"""Command-line interface: dataset generation, blendfake synthesis, training,
evaluation, and latent-space analysis."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import yaml

from .analysis import build_anchor_dump, latent_report
from .data import DeskDataSpec, load_manifest, save_manifest, synth_desk_dataset
from .metrics import ScoreSet, frame_metrics
from .training import QuadSet, RunConfig, Trainer, config_from_dict, config_to_dict


def _load_config(path: str | None, overrides: dict) -> RunConfig:
    base = {}
    if path:
        base = yaml.safe_load(Path(path).read_text()) or {}
    base.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(base)


def _train_records(manifest: str, split: str = "train"):
    return [r for r in load_manifest(manifest) if r.split == split]


def cmd_make_desk_data(args) -> int:
    spec = DeskDataSpec(
        n_identities=args.identities,
        videos_per_identity=args.videos_per_identity,
        frames_per_video=args.frames_per_video,
        image_size=args.size,
        seed=args.seed,
        blend_strength=args.blend_strength,
        identity_mismatch=args.identity_mismatch,
        artifact_amplitude=args.artifact_amplitude,
        artifact_style=args.artifact_style,
        test_fraction=args.test_fraction,
        test_artifact_amplitude=args.test_artifact_amplitude,
        test_artifact_style=args.test_artifact_style,
    )
    manifest = synth_desk_dataset(spec, args.out)
    print(f"wrote {manifest}")
    return 0


def cmd_synth(args) -> int:
    records = _train_records(args.manifest, args.split)
    if args.pool_size:
        records = records[: args.pool_size]
    quadset = QuadSet(records, (args.size, args.size), cbi_failure_policy=args.failure_policy)
    out = Path(args.out)
    (out / "quads").mkdir(parents=True, exist_ok=True)
    import cv2

    rows = []
    for rec in quadset.records:
        quad = quadset.build(rec, [args.seed])
        if quad is None:
            continue
        paths = []
        for kind, img in zip(quad.KINDS, quad.images()):
            rel = f"quads/{rec.frame_id}_{kind.name.lower()}.png"
            cv2.imwrite(str(out / rel), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))
            paths.append(rel)
        rows.append(
            {
                "frame_id": rec.frame_id,
                "video_id": rec.video_id,
                "paths": paths,
                "labels": [label.as_array().tolist() for label in quad.attribute_labels()],
                "cbi_substituted": quad.cbi_substituted,
                "sbi_recipe": {"blend_ratio": quad.sbi.recipe.blend_ratio,
                               "feather_sigma": quad.sbi.recipe.feather_sigma,
                               "deform_amplitude": quad.sbi.recipe.deform_amplitude},
                "cbi_source": quad.cbi.source_frame_id,
            }
        )
    payload = {"format": "quad-manifest/v1", "seed": args.seed, "quads": rows, "dropped": quadset.dropped}
    (out / "quad_manifest.json").write_text(json.dumps(payload, indent=1))
    print(f"wrote {len(rows)} quads ({quadset.dropped} dropped) to {out}")
    return 0


def cmd_train(args) -> int:
    overrides = {
        "epochs": args.epochs,
        "seed": args.seed,
        "variant": args.variant,
        "strategy": args.strategy,
        "organization": args.organization,
        "learning_rate": args.learning_rate,
        "dtype": args.dtype,
    }
    config = _load_config(args.config, overrides)
    records = _train_records(args.manifest)
    trainer = Trainer(config, records, args.out)
    (Path(args.out) / "run_config.yaml").write_text(yaml.safe_dump(config_to_dict(config)))
    trainer.train()
    ckpt = Path(args.out) / "checkpoint.pt"
    trainer.save_checkpoint(ckpt)
    print(f"trained {config.epochs} epochs; checkpoint at {ckpt}")
    return 0


def cmd_resume(args) -> int:
    records = _train_records(args.manifest)
    trainer = Trainer.restore(args.checkpoint, records, args.out)
    trainer.train(args.epochs)
    ckpt = Path(args.out) / "checkpoint.pt"
    trainer.save_checkpoint(ckpt)
    print(f"resumed to epoch {trainer.state.epoch}; checkpoint at {ckpt}")
    return 0


def cmd_evaluate(args) -> int:
    records = [r for r in load_manifest(args.manifest) if r.split == args.split]
    trainer = Trainer.restore(args.checkpoint, records, args.out)
    item_ids, video_ids, scores, labels = trainer.score_records(records)
    metrics = frame_metrics(ScoreSet(item_ids, video_ids, scores, labels))
    out = Path(args.out) / "metrics.json"
    out.write_text(json.dumps({"split": args.split, **metrics}, indent=1))
    print(json.dumps(metrics, indent=1))
    return 0


def cmd_analyze_latent(args) -> int:
    records = [r for r in load_manifest(args.manifest) if r.split == args.split]
    trainer = Trainer.restore(args.checkpoint, records, args.out)
    report = latent_report(trainer, records, args.out, seed=args.seed)
    print(json.dumps(report, indent=1))
    return 0


def cmd_export_embeddings(args) -> int:
    records = [r for r in load_manifest(args.manifest) if r.split == args.split]
    trainer = Trainer.restore(args.checkpoint, records, Path(args.out).parent)
    dump, _ = build_anchor_dump(trainer, records, seed=args.seed)
    dump.save(args.out)
    print(f"wrote {len(dump.vectors)} embeddings (d={dump.d}) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proganchor")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-desk-data", help="generate the procedural desk-scale dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identities", type=int, default=8)
    p.add_argument("--videos-per-identity", type=int, default=2)
    p.add_argument("--frames-per-video", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--blend-strength", type=float, default=0.6)
    p.add_argument("--identity-mismatch", type=float, default=0.6)
    p.add_argument("--artifact-amplitude", type=float, default=0.6)
    p.add_argument("--artifact-style", default="checker")
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--test-artifact-amplitude", type=float, default=None)
    p.add_argument("--test-artifact-style", default=None)
    p.set_defaults(func=cmd_make_desk_data)

    p = sub.add_parser("synth", help="materialize aligned quads to disk")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="train")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--pool-size", type=int, default=0, help="cap the record pool (0 = all)")
    p.add_argument("--failure-policy", choices=["drop", "substitute_sbi"], default="drop")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="YAML run config")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--variant", default=None, choices=["full", "bf_only", "df_only", "vht"])
    p.add_argument("--strategy", default=None, choices=["triplet_binary", "multi_label", "multi_class"])
    p.add_argument("--organization", default=None, choices=["r2b2d", "r2d2b", "surround"])
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--dtype", default=None, choices=["float32", "float64"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("resume", help="continue training from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("evaluate", help="frame/video metrics of a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze-latent", help="embedding dump, regularity and ordering reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze_latent)

    p = sub.add_parser("export-embeddings", help="write the anchor embedding dump")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_embeddings)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
