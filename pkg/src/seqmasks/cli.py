"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError, SeqMasksError
from .evaluation import CMC_RANKS, RetrievalProblem, casia_eval, cmc_map
from .index import DatasetIndex, filter_corpus, write_report
from .masks import is_effective
from .parsers import parse_casia_b, parse_mask_mars
from .training import extract_features, load_model, train

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmasks",
        description="Train and evaluate the appearance+gait video re-identification model.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-dataset", help="screen a raw frames/masks corpus into the normalized layout")
    p.add_argument("--frames", required=True, help="raw frame tree: <id>/<tracklet>/*.jpg|png")
    p.add_argument("--masks", required=True, help="raw mask tree: <id>/<tracklet>/*.png")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--min-frames", type=int, default=8, help="minimum effective masks per sequence (default 8)")
    p.add_argument("--min-fg-ratio", type=float, default=0.15, help="effective-mask foreground ratio (default 0.15)")
    p.add_argument("--splits", default=None, help="JSON file mapping 'id' or 'id/tracklet' to split/camera")

    p = sub.add_parser("train", help="train a model from a YAML config")
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--resume", default=None, help="checkpoint to restore all components from")

    p = sub.add_parser("extract", help="extract fused descriptors for one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus root")
    p.add_argument("--protocol", required=True, choices=("mars", "casia"))
    p.add_argument("--split", default="query", choices=("train", "query", "gallery"))
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("evaluate", help="extract query/gallery features and score them")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="corpus root")
    p.add_argument("--protocol", required=True, choices=("mars", "casia"))
    p.add_argument("--out", required=True, help="output directory for reports")

    p = sub.add_parser("report", help="re-print a stored evaluation report")
    p.add_argument("--out", required=True, help="directory holding eval_report.json")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handlers = {
        "build-dataset": cmd_build_dataset,
        "train": cmd_train,
        "extract": cmd_extract,
        "evaluate": cmd_evaluate,
        "report": cmd_report,
    }
    try:
        handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SeqMasksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


def _load_split_plan(path: str | None) -> dict:
    if path is None:
        return {}
    plan_path = Path(path)
    if not plan_path.is_file():
        raise ConfigError(f"splits file not found: {plan_path}")
    plan = json.loads(plan_path.read_text())
    if not isinstance(plan, dict):
        raise ConfigError(f"splits file must hold a JSON object: {plan_path}")
    return plan


def _plan_for(plan: dict, ident: str, tracklet: str) -> tuple[str, str]:
    entry = plan.get(f"{ident}/{tracklet}", plan.get(ident, {}))
    if isinstance(entry, str):
        return entry, "c0"
    return entry.get("split", "train"), entry.get("camera", "c0")


IMAGE_EXTS = (".jpg", ".jpeg", ".png")


def cmd_build_dataset(args) -> None:
    if not 0.0 < args.min_fg_ratio < 1.0:
        raise ConfigError(f"--min-fg-ratio must lie in (0, 1), got {args.min_fg_ratio}")
    if args.min_frames < 1:
        raise ConfigError(f"--min-frames must be >= 1, got {args.min_frames}")
    plan = _load_split_plan(args.splits)
    frames_root, masks_root = Path(args.frames), Path(args.masks)
    if not frames_root.is_dir():
        raise DataError(f"frames directory not found: {frames_root}")
    if not masks_root.is_dir():
        raise DataError(f"masks directory not found: {masks_root}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    manifest_lines: list[dict] = []
    skip: list[dict] = []
    lengths: list[int] = []
    split_counts: dict[str, dict] = {s: {"ids": set(), "sequences": 0} for s in ("train", "query", "gallery")}
    for id_dir in sorted(p for p in frames_root.iterdir() if p.is_dir()):
        for seq_dir in sorted(p for p in id_dir.iterdir() if p.is_dir()):
            key = f"{id_dir.name}/{seq_dir.name}"
            frame_files = sorted(p for p in seq_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS)
            mask_dir = masks_root / id_dir.name / seq_dir.name
            mask_files = sorted(mask_dir.glob("*.png")) if mask_dir.is_dir() else []
            if not frame_files or len(frame_files) != len(mask_files):
                skip.append({
                    "sequence": key, "reason": "frame_mask_mismatch",
                    "frames": len(frame_files), "masks": len(mask_files),
                })
                continue
            try:
                effective = []
                for i, mf in enumerate(mask_files):
                    with Image.open(mf) as img:
                        m = (np.asarray(img.convert("L")) > 0).astype(np.uint8)
                    if is_effective(m, args.min_fg_ratio):
                        effective.append(i)
            except OSError as exc:
                skip.append({"sequence": key, "reason": "unreadable_mask", "error": str(exc)})
                continue
            if len(effective) < args.min_frames:
                skip.append({"sequence": key, "reason": "too_few_effective", "effective": len(effective)})
                continue
            split, camera = _plan_for(plan, id_dir.name, seq_dir.name)
            if split not in split_counts:
                raise ConfigError(f"splits file assigns unknown split {split!r} to {key}")
            fdst = out / "frames" / id_dir.name / seq_dir.name
            mdst = out / "masks" / id_dir.name / seq_dir.name
            fdst.mkdir(parents=True, exist_ok=True)
            mdst.mkdir(parents=True, exist_ok=True)
            for i, (ff, mf) in enumerate(zip(frame_files, mask_files)):
                with Image.open(ff) as img:
                    img.convert("RGB").save(fdst / f"{i:06d}.jpg", quality=95)
                with Image.open(mf) as img:
                    arr = (np.asarray(img.convert("L")) > 0).astype(np.uint8) * np.uint8(255)
                Image.fromarray(arr).save(mdst / f"{i:06d}.png")
            manifest_lines.append({
                "id": id_dir.name,
                "tracklet": seq_dir.name,
                "camera": camera,
                "split": split,
                "frame_count": len(frame_files),
                "effective_frames": effective,
            })
            lengths.append(len(frame_files))
            split_counts[split]["ids"].add(id_dir.name)
            split_counts[split]["sequences"] += 1

    with open(out / "manifest.jsonl", "w") as fh:
        for line in manifest_lines:
            fh.write(json.dumps(line) + "\n")
    write_report(out / "skip_report.jsonl", skip)
    stats = {
        "ids": len({m["id"] for m in manifest_lines}),
        "sequences": len(manifest_lines),
        "splits": {s: {"ids": len(c["ids"]), "sequences": c["sequences"]} for s, c in split_counts.items()},
        "frames_min": min(lengths) if lengths else 0,
        "frames_max": max(lengths) if lengths else 0,
        "frames_mean": float(np.mean(lengths)) if lengths else 0.0,
        "skipped": len(skip),
    }
    (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    if not manifest_lines:
        log.warning("no sequences passed the screening rules; manifest is empty")
    print(json.dumps(stats, indent=2))


def cmd_train(args) -> None:
    from .config import load_train_config

    config = load_train_config(args.config)
    if config.data_root is None:
        raise ConfigError("config data.root is required for training")
    index = _load_index(config.data_root, config.dataset)
    if config.dataset == "mars":
        index = filter_corpus(
            index, config.min_effective, config.fg_threshold,
            report_path=Path(config.checkpoint_dir) / "filter_report.jsonl",
        )
    result = train(config, index, resume=args.resume)
    print(f"wrote {len(result.checkpoints)} checkpoint(s); log at {result.log_path}")


def _load_index(root: str | Path, protocol: str) -> DatasetIndex:
    if protocol == "casia":
        if (Path(root) / "manifest.jsonl").is_file():
            raise ConfigError(
                f"{root} holds a normalized video corpus (manifest.jsonl present); "
                "it has no view/condition metadata, so the casia protocol does not apply"
            )
        # the effective-mask screening is a video-corpus construction rule;
        # the gait tree is used as-is
        index = parse_casia_b(root)
    else:
        index = parse_mask_mars(root)
    if index.sequence_count == 0:
        raise DataError(f"no sequences found under {root}")
    return index


def _extract_split(checkpoint: str, data: str, protocol: str, split: str):
    model, config, manifest = load_model(checkpoint)
    index = _load_index(data, protocol)
    if protocol == "mars":
        index = filter_corpus(index, config.min_effective, config.fg_threshold)
    store = extract_features(model, index, split)
    return store, manifest


def cmd_extract(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store, _ = _extract_split(args.checkpoint, args.data, args.protocol, args.split)
    path = out / f"features_{args.split}.npz"
    store.save(path)
    print(f"wrote {store.embeddings.shape[0]} descriptors to {path}")


def cmd_evaluate(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, config, _ = load_model(args.checkpoint)
    index = _load_index(args.data, args.protocol)
    if args.protocol == "mars":
        index = filter_corpus(index, config.min_effective, config.fg_threshold)
    query = extract_features(model, index, "query")
    gallery = extract_features(model, index, "gallery")
    if query.embeddings.shape[0] == 0 or gallery.embeddings.shape[0] == 0:
        raise DataError("need non-empty query and gallery splits to evaluate")

    if args.protocol == "casia":
        if (query.views < 0).any() or (gallery.views < 0).any():
            raise ConfigError("casia protocol needs view/condition metadata; this corpus has none")
        problem = RetrievalProblem(
            query_emb=query.embeddings, gallery_emb=gallery.embeddings,
            query_ids=query.identities, gallery_ids=gallery.identities,
            query_views=query.views, gallery_views=gallery.views,
            query_conds=query.conditions, gallery_conds=gallery.conditions,
        )
        report = casia_eval(problem)
        report.write_casia_matrices(out)
    else:
        problem = RetrievalProblem(
            query_emb=query.embeddings, gallery_emb=gallery.embeddings,
            query_ids=query.identities, gallery_ids=gallery.identities,
            query_cams=query.cameras, gallery_cams=gallery.cameras,
        )
        report = cmc_map(problem)
    report.write_json(out / "eval_report.json")
    report.write_csv(out / "eval_report.csv")
    _print_report(report.to_dict())


def cmd_report(args) -> None:
    path = Path(args.out) / "eval_report.json"
    if not path.is_file():
        raise DataError(f"report not found: {path}")
    _print_report(json.loads(path.read_text()))


def _print_report(data: dict) -> None:
    if "rank1" in data:
        cols = [f"Rank{k}" for k in CMC_RANKS] + ["mAP"]
        vals = [data[f"rank{k}"] for k in CMC_RANKS] + [data["map"]]
        print("  ".join(f"{c:>7}" for c in cols))
        print("  ".join(f"{100 * v:7.1f}" for v in vals))
        if data.get("excluded_queries"):
            print(f"(excluded queries: {data['excluded_queries']})")
    if "casia" in data:
        print(f"{'Condition':>10}  {'Including':>10}  {'Excluding':>10}")
        for cond, block in data["casia"].items():
            print(f"{cond:>10}  {100 * block['including']:10.3f}  {100 * block['excluding']:10.3f}")


if __name__ == "__main__":
    sys.exit(main())
