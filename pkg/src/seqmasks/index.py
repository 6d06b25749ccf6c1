"""Corpus indexing and the effective-mask screening filter.

A DatasetIndex is an immutable list of sequence descriptors; frame pixels
stay on disk until a loader asks for them. Records built by the synthetic
generators may instead carry their arrays in memory.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, InvalidInputError
from .masks import is_effective

log = logging.getLogger(__name__)

SPLITS = ("train", "query", "gallery")


@dataclass(frozen=True)
class SequenceRecord:
    """One tracklet: identity, provenance metadata, and frame/mask sources."""

    identity: str
    tracklet: str
    split: str
    camera: str | None = None
    view_angle: int | None = None
    condition: str | None = None
    frame_paths: tuple[Path, ...] | None = None
    mask_paths: tuple[Path, ...] | None = None
    frames_data: np.ndarray | None = None  # (T, H, W, 3) uint8
    masks_data: np.ndarray | None = None  # (T, H, W) in {0, 1}
    effective_frames: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise InvalidInputError(f"split must be one of {SPLITS}, got {self.split!r}")
        if len(self) < 1:
            raise InvalidInputError("a sequence needs at least one frame")
        n_masks = len(self.mask_paths) if self.mask_paths is not None else (
            len(self.masks_data) if self.masks_data is not None else 0
        )
        if n_masks != len(self):
            raise InvalidInputError(
                f"{self.identity}/{self.tracklet}: {len(self)} frames but {n_masks} masks"
            )

    def __len__(self) -> int:
        if self.frame_paths is not None:
            return len(self.frame_paths)
        if self.frames_data is not None:
            return len(self.frames_data)
        if self.mask_paths is not None:
            return len(self.mask_paths)
        return len(self.masks_data) if self.masks_data is not None else 0

    def load_mask(self, i: int) -> np.ndarray:
        """Binary (H, W) mask; any nonzero source pixel counts as foreground."""
        if self.masks_data is not None:
            return np.asarray(self.masks_data[i], dtype=np.uint8)
        with Image.open(self.mask_paths[i]) as img:
            arr = np.asarray(img.convert("L"))
        return (arr > 0).astype(np.uint8)

    def load_frame(self, i: int) -> np.ndarray:
        """RGB (H, W, 3) uint8 frame; silhouette-only corpora replicate the mask."""
        if self.frames_data is not None:
            return np.asarray(self.frames_data[i], dtype=np.uint8)
        if self.frame_paths is None:
            mask = self.load_mask(i) * np.uint8(255)
            return np.repeat(mask[:, :, None], 3, axis=2)
        with Image.open(self.frame_paths[i]) as img:
            return np.asarray(img.convert("RGB"))

    def key(self) -> str:
        return f"{self.identity}/{self.tracklet}"


@dataclass(frozen=True)
class DatasetIndex:
    """Immutable view over a parsed corpus."""

    entries: tuple[SequenceRecord, ...]

    @property
    def sequence_count(self) -> int:
        return len(self.entries)

    @property
    def id_count(self) -> int:
        return len({e.identity for e in self.entries})

    def entries_in(self, split: str) -> tuple[SequenceRecord, ...]:
        if split not in SPLITS:
            raise InvalidInputError(f"split must be one of {SPLITS}, got {split!r}")
        return tuple(e for e in self.entries if e.split == split)

    def split_counts(self) -> dict[str, dict[str, int]]:
        out = {}
        for split in SPLITS:
            sub = self.entries_in(split)
            out[split] = {
                "ids": len({e.identity for e in sub}),
                "sequences": len(sub),
            }
        return out

    def train_label_map(self) -> dict[str, int]:
        """Stable identity -> class index mapping over the train split."""
        ids = sorted({e.identity for e in self.entries_in("train")})
        return {name: i for i, name in enumerate(ids)}

    def summary(self) -> dict:
        lengths = [len(e) for e in self.entries]
        return {
            "ids": self.id_count,
            "sequences": self.sequence_count,
            "splits": self.split_counts(),
            "frames_min": int(min(lengths)) if lengths else 0,
            "frames_max": int(max(lengths)) if lengths else 0,
            "frames_mean": float(np.mean(lengths)) if lengths else 0.0,
        }

    def training_warnings(self) -> list[str]:
        """Identities too thin for positive mining without replacement."""
        counts: dict[str, int] = {}
        for e in self.entries_in("train"):
            counts[e.identity] = counts.get(e.identity, 0) + 1
        return [
            f"train identity {name!r} has only {n} sequence(s); "
            "positive pairs will reuse it via replacement"
            for name, n in sorted(counts.items())
            if n < 2
        ]


def write_report(path: Path | str | None, records: list[dict]) -> None:
    """Append skip/validation records as JSON lines."""
    if path is None or not records:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def filter_corpus(
    index: DatasetIndex,
    min_effective: int = 8,
    threshold: float = 0.15,
    report_path: Path | str | None = None,
) -> DatasetIndex:
    """Keep sequences with at least `min_effective` effective masks.

    The indices of the effective frames are recorded on every retained
    record. Sequences dropped by the rule, and sequences whose masks cannot
    be read, land in the skip report instead of raising.
    """
    if min_effective < 1:
        raise ConfigError(f"min_effective must be >= 1, got {min_effective}")
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    kept: list[SequenceRecord] = []
    report: list[dict] = []
    for rec in index.entries:
        try:
            effective = tuple(
                i for i in range(len(rec)) if is_effective(rec.load_mask(i), threshold)
            )
        except (OSError, InvalidInputError) as exc:
            report.append({"sequence": rec.key(), "reason": "unreadable_mask", "error": str(exc)})
            continue
        if len(effective) < min_effective:
            report.append(
                {"sequence": rec.key(), "reason": "too_few_effective", "effective": len(effective)}
            )
            continue
        kept.append(dataclasses.replace(rec, effective_frames=effective))
    if report:
        log.warning("filter_corpus dropped %d of %d sequences", len(report), index.sequence_count)
    write_report(report_path, report)
    return DatasetIndex(entries=tuple(kept))
