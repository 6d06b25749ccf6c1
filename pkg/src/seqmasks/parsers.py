"""Directory-layout parsers producing DatasetIndex objects.

Two layouts are understood: the 11-view gait tree (silhouette PNGs grouped
by id / condition-sequence / view) and the normalized video corpus layout
(frames/ + masks/ trees described by a manifest.jsonl).
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .errors import DataError
from .evaluation import VIEW_ANGLES
from .index import DatasetIndex, SequenceRecord, write_report

log = logging.getLogger(__name__)

CASIA_TRAIN_IDS = 74  # ids 001..074 train, the rest test
CASIA_CONDITIONS = {"nm": 6, "bg": 2, "cl": 2}
GALLERY_NM_SEQS = (1, 2, 3, 4)

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_KEYS = {"id", "tracklet", "camera", "split", "frame_count"}


def parse_casia_b(root: Path | str, report_path: Path | str | None = None) -> DatasetIndex:
    """Index a gait tree `root/<id>/<cond>-<seq>/<view>/*.png`.

    The first 74 ids (numeric order) form the train split; for the remaining
    ids the first four normal-walk sequences become the gallery and every
    other sequence a query. Malformed folder names are skipped with a report;
    an empty or missing root just yields an empty index.
    """
    root = Path(root)
    entries: list[SequenceRecord] = []
    report: list[dict] = []
    if not root.is_dir():
        log.warning("gait tree root %s does not exist; empty index", root)
        return DatasetIndex(entries=())
    for id_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if not (id_dir.name.isdigit() and len(id_dir.name) == 3):
            report.append({"path": str(id_dir), "reason": "bad_id_folder"})
            continue
        numeric_id = int(id_dir.name)
        expected = sum(CASIA_CONDITIONS.values()) * len(VIEW_ANGLES)
        found = 0
        for seq_dir in sorted(p for p in id_dir.iterdir() if p.is_dir()):
            parts = seq_dir.name.split("-")
            if len(parts) != 2 or parts[0] not in CASIA_CONDITIONS or not parts[1].isdigit():
                report.append({"path": str(seq_dir), "reason": "bad_condition_folder"})
                continue
            cond, seq_no = parts[0], int(parts[1])
            if not 1 <= seq_no <= CASIA_CONDITIONS[cond]:
                report.append({"path": str(seq_dir), "reason": "sequence_number_out_of_range"})
                continue
            for view_dir in sorted(p for p in seq_dir.iterdir() if p.is_dir()):
                if not view_dir.name.isdigit() or int(view_dir.name) not in VIEW_ANGLES:
                    report.append({"path": str(view_dir), "reason": "bad_view_folder"})
                    continue
                masks = tuple(sorted(view_dir.glob("*.png")))
                if not masks:
                    report.append({"path": str(view_dir), "reason": "no_frames"})
                    continue
                if numeric_id <= CASIA_TRAIN_IDS:
                    split = "train"
                elif cond == "nm" and seq_no in GALLERY_NM_SEQS:
                    split = "gallery"
                else:
                    split = "query"
                entries.append(
                    SequenceRecord(
                        identity=id_dir.name,
                        tracklet=f"{seq_dir.name}/{view_dir.name}",
                        split=split,
                        view_angle=int(view_dir.name),
                        condition=cond.upper(),
                        mask_paths=masks,
                    )
                )
                found += 1
        if found < expected:
            log.warning("id %s has %d of %d sequence slots", id_dir.name, found, expected)
    write_report(report_path, report)
    if report:
        log.warning("skipped %d malformed entries under %s", len(report), root)
    return DatasetIndex(entries=tuple(entries))


def parse_mask_mars(root: Path | str, report_path: Path | str | None = None) -> DatasetIndex:
    """Index a normalized video corpus from its manifest.

    Every manifest record must point at existing frame/mask directories
    whose file counts agree with it; all violations are collected into one
    validation error.
    """
    root = Path(root)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    entries: list[SequenceRecord] = []
    problems: list[str] = []
    report: list[dict] = []
    with open(manifest_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: invalid JSON ({exc})")
                continue
            missing = MANIFEST_KEYS - rec.keys()
            if missing:
                problems.append(f"line {lineno}: missing keys {sorted(missing)}")
                continue
            ident, tracklet = str(rec["id"]), str(rec["tracklet"])
            frames_dir = root / "frames" / ident / tracklet
            masks_dir = root / "masks" / ident / tracklet
            if not frames_dir.is_dir():
                problems.append(f"{ident}/{tracklet}: missing directory {frames_dir}")
                continue
            if not masks_dir.is_dir():
                problems.append(f"{ident}/{tracklet}: missing directory {masks_dir}")
                continue
            frame_paths = tuple(sorted(frames_dir.glob("*.jpg")))
            mask_paths = tuple(sorted(masks_dir.glob("*.png")))
            if len(frame_paths) != rec["frame_count"] or len(mask_paths) != rec["frame_count"]:
                problems.append(
                    f"{ident}/{tracklet}: manifest says {rec['frame_count']} frames, "
                    f"found {len(frame_paths)} frames / {len(mask_paths)} masks"
                )
                continue
            effective = rec.get("effective_frames")
            entries.append(
                SequenceRecord(
                    identity=ident,
                    tracklet=tracklet,
                    split=str(rec["split"]),
                    camera=str(rec["camera"]),
                    frame_paths=frame_paths,
                    mask_paths=mask_paths,
                    effective_frames=tuple(effective) if effective is not None else None,
                )
            )
    if problems:
        raise DataError(
            "manifest/tree mismatch:\n  " + "\n  ".join(problems[:50])
            + (f"\n  ... and {len(problems) - 50} more" if len(problems) > 50 else "")
        )
    write_report(report_path, report)
    return DatasetIndex(entries=tuple(entries))
