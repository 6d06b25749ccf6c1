"""Synthetic walking-figure corpora with known ground truth.

Each identity gets its own torso width, color/stripe texture, and leg-swing
period, so appearance and gait cues are both informative. Generators exist
in two flavors: in-memory indexes for fast tests and on-disk trees for
exercising the CLI and parsers.
"""
from __future__ import annotations

import colorsys
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .index import DatasetIndex, SequenceRecord

DEFAULT_HW = (64, 32)


@dataclass(frozen=True)
class IdentityStyle:
    """Per-identity appearance and gait parameters."""

    hue: float
    torso_halfwidth: int
    stripe_height: int
    period: float
    swing: float

    @classmethod
    def for_identity(cls, ident_no: int, n_ids: int) -> "IdentityStyle":
        return cls(
            hue=ident_no / max(n_ids, 1),
            torso_halfwidth=5 + ident_no % 4,
            stripe_height=2 + ident_no % 3,
            period=6.0 + (ident_no % 5),
            swing=0.25 + 0.08 * (ident_no % 4),
        )


def _render_frame(
    style: IdentityStyle, t: int, hw: tuple[int, int], rng: np.random.Generator, phase0: float
) -> tuple[np.ndarray, np.ndarray]:
    h, w = hw
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx = 8 + (1.3 * t) % max(w - 16, 1)
    torso = ((yy - 0.38 * h) / (0.22 * h)) ** 2 + ((xx - cx) / style.torso_halfwidth) ** 2 <= 1.0
    head = (yy - 0.12 * h) ** 2 + (xx - cx) ** 2 <= (0.07 * h) ** 2
    hip_y = 0.55 * h
    theta = style.swing * np.sin(2 * np.pi * t / style.period + phase0)
    legs = np.zeros((h, w), dtype=bool)
    for sign in (1.0, -1.0):
        slope = np.tan(sign * theta)
        center = cx + slope * (yy - hip_y)
        legs |= (yy >= hip_y) & (yy <= 0.92 * h) & (np.abs(xx - center) <= 1.8)
    mask = (torso | head | legs).astype(np.uint8)

    r, g, b = colorsys.hsv_to_rgb(style.hue, 0.9, 0.9)
    body = np.zeros((h, w, 3), dtype=np.float64)
    body[..., 0], body[..., 1], body[..., 2] = r, g, b
    stripes = ((yy // style.stripe_height) % 2).astype(bool)
    body[stripes] *= 0.55
    frame = rng.uniform(0.05, 0.25, size=(h, w, 3))
    frame[mask.astype(bool)] = body[mask.astype(bool)]
    frame += rng.normal(0.0, 0.02, size=frame.shape)
    return (np.clip(frame, 0, 1) * 255).astype(np.uint8), mask


def render_sequence(
    ident_no: int,
    n_ids: int,
    n_frames: int,
    hw: tuple[int, int] = DEFAULT_HW,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """(T, H, W, 3) frames and (T, H, W) binary masks of one walking figure."""
    rng = np.random.default_rng(seed)
    style = IdentityStyle.for_identity(ident_no, n_ids)
    phase0 = rng.uniform(0, 2 * np.pi)
    frames, masks = zip(
        *(_render_frame(style, t, hw, rng, phase0) for t in range(n_frames))
    )
    return np.stack(frames), np.stack(masks)


def generate_index(
    n_ids: int = 8,
    seqs_per_id: int = 4,
    frames_per_seq: int = 12,
    hw: tuple[int, int] = DEFAULT_HW,
    seed: int = 0,
    split: str = "train",
) -> DatasetIndex:
    """In-memory corpus; cameras alternate c0/c1 so self-matches get masked."""
    entries = []
    for ident_no in range(n_ids):
        for seq_no in range(seqs_per_id):
            frames, masks = render_sequence(
                ident_no, n_ids, frames_per_seq, hw, seed=seed * 100003 + ident_no * 131 + seq_no
            )
            entries.append(
                SequenceRecord(
                    identity=f"{ident_no:04d}",
                    tracklet=f"T{seq_no:04d}",
                    split=split,
                    camera=f"c{seq_no % 2}",
                    frames_data=frames,
                    masks_data=masks,
                )
            )
    return DatasetIndex(entries=tuple(entries))


def _mask_with_ratio(hw: tuple[int, int], ratio: float) -> np.ndarray:
    """Binary mask whose foreground ratio is exactly round(ratio * area) / area."""
    h, w = hw
    n = int(round(ratio * h * w))
    flat = np.zeros(h * w, dtype=np.uint8)
    flat[:n] = 1
    return flat.reshape(h, w)


def fixture_index(
    effective_counts: list[int],
    extra_ineffective: int = 3,
    hw: tuple[int, int] = (20, 20),
    threshold: float = 0.15,
    seed: int = 0,
) -> DatasetIndex:
    """One train sequence per entry of `effective_counts`, holding exactly
    that many effective masks (ratio == threshold, boundary included) padded
    with `extra_ineffective` masks just under the threshold.
    """
    rng = np.random.default_rng(seed)
    entries = []
    area = hw[0] * hw[1]
    under = (int(round(threshold * area)) - 1) / area
    for i, n_eff in enumerate(effective_counts):
        n_frames = n_eff + extra_ineffective
        masks = np.stack(
            [_mask_with_ratio(hw, threshold) for _ in range(n_eff)]
            + [_mask_with_ratio(hw, under) for _ in range(extra_ineffective)]
        )
        frames = rng.integers(0, 256, size=(n_frames, *hw, 3), dtype=np.uint8)
        entries.append(
            SequenceRecord(
                identity=f"{i // 2:04d}",  # two sequences per identity
                tracklet=f"T{i:04d}",
                split="train",
                camera=f"c{i % 2}",
                frames_data=frames,
                masks_data=masks,
            )
        )
    return DatasetIndex(entries=tuple(entries))


def write_raw_corpus(
    frames_dir: Path | str,
    masks_dir: Path | str,
    effective_counts: dict[str, list[int]] | None = None,
    n_ids: int = 3,
    seqs_per_id: int = 2,
    frames_per_seq: int = 10,
    hw: tuple[int, int] = DEFAULT_HW,
    seed: int = 0,
) -> dict:
    """Write a raw frames/masks tree (no manifest) for the dataset builder.

    With `effective_counts` ({identity: [count per sequence]}) masks are
    synthesized at exact ratios; otherwise walking figures are rendered (all
    of their masks are comfortably effective). Returns per-sequence truth.
    """
    frames_dir, masks_dir = Path(frames_dir), Path(masks_dir)
    truth: dict[str, dict] = {}
    if effective_counts is None:
        effective_counts = {
            f"{i:04d}": [frames_per_seq] * seqs_per_id for i in range(n_ids)
        }
        rendered = True
    else:
        rendered = False
    for ident_no, (ident, counts) in enumerate(sorted(effective_counts.items())):
        for seq_no, n_eff in enumerate(counts):
            tracklet = f"T{seq_no:04d}"
            if rendered:
                frames, masks = render_sequence(
                    ident_no, len(effective_counts), frames_per_seq, hw,
                    seed=seed * 7919 + ident_no * 131 + seq_no,
                )
                n_eff_true = int(frames_per_seq)
            else:
                idx = fixture_index([n_eff], hw=(20, 20), seed=seed + ident_no * 31 + seq_no)
                rec = idx.entries[0]
                frames, masks = rec.frames_data, rec.masks_data
                n_eff_true = n_eff
            fdir = frames_dir / ident / tracklet
            mdir = masks_dir / ident / tracklet
            fdir.mkdir(parents=True, exist_ok=True)
            mdir.mkdir(parents=True, exist_ok=True)
            for t in range(len(frames)):
                Image.fromarray(frames[t]).save(fdir / f"{t:06d}.jpg", quality=95)
                Image.fromarray(masks[t] * np.uint8(255)).save(mdir / f"{t:06d}.png")
            truth[f"{ident}/{tracklet}"] = {
                "frames": len(frames),
                "effective": n_eff_true,
            }
    return truth


def write_normalized_corpus(
    root: Path | str,
    n_ids: int = 3,
    seqs_per_id: int = 2,
    frames_per_seq: int = 10,
    hw: tuple[int, int] = DEFAULT_HW,
    seed: int = 0,
    split_plan: dict[str, str] | None = None,
) -> dict:
    """Write a complete normalized corpus (frames/, masks/, manifest.jsonl)."""
    root = Path(root)
    truth = write_raw_corpus(
        root / "frames", root / "masks",
        n_ids=n_ids, seqs_per_id=seqs_per_id, frames_per_seq=frames_per_seq, hw=hw, seed=seed,
    )
    with open(root / "manifest.jsonl", "w") as fh:
        for key, info in sorted(truth.items()):
            ident, tracklet = key.split("/")
            split = (split_plan or {}).get(key, (split_plan or {}).get(ident, "train"))
            rec = {
                "id": ident,
                "tracklet": tracklet,
                "camera": f"c{int(tracklet[1:]) % 2}",
                "split": split,
                "frame_count": info["frames"],
            }
            fh.write(json.dumps(rec) + "\n")
            info["split"] = split
    return truth


def write_casia_tree(
    root: Path | str,
    n_ids: int = 4,
    frames_per_seq: int = 4,
    hw: tuple[int, int] = DEFAULT_HW,
    first_id: int = 1,
    seed: int = 0,
    views: tuple[int, ...] = tuple(range(0, 181, 18)),
) -> dict:
    """Write an 11-view gait tree (silhouette PNGs only)."""
    root = Path(root)
    conditions = {"nm": 6, "bg": 2, "cl": 2}
    n_seqs = 0
    for ident_no in range(n_ids):
        ident = f"{first_id + ident_no:03d}"
        for cond, reps in conditions.items():
            for seq_no in range(1, reps + 1):
                for view in views:
                    _, masks = render_sequence(
                        ident_no, n_ids, frames_per_seq, hw,
                        seed=seed + ident_no * 997 + seq_no * 31 + view,
                    )
                    vdir = root / ident / f"{cond}-{seq_no:02d}" / f"{view:03d}"
                    vdir.mkdir(parents=True, exist_ok=True)
                    for t in range(frames_per_seq):
                        Image.fromarray(masks[t] * np.uint8(255)).save(vdir / f"{t:03d}.png")
                    n_seqs += 1
    return {"ids": n_ids, "sequences": n_seqs}
