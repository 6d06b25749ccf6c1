"""Identity-grouped batch construction for triplet mining."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, DataError
from .index import DatasetIndex, SequenceRecord
from .masks import align_silhouette, crop_silhouette
from .transforms import augment_pair, eval_pair, normalize_frames


@dataclass
class TrainBatch:
    """P identities x Kseq sequences, ready for one forward pass."""

    frames: torch.Tensor  # (P*Kseq, T, 3, 256, 128), standardized
    frame_masks: torch.Tensor  # (P*Kseq, T, 16, 8)
    gait_sils: torch.Tensor  # (P*Kseq, K, 1, 64, 44)
    labels: torch.Tensor  # (P*Kseq,)
    identities: tuple[str, ...]
    sequence_keys: tuple[str, ...]
    p: int
    kseq: int
    t_frames: int
    k_sils: int


def _candidate_frames(record: SequenceRecord) -> np.ndarray:
    if record.effective_frames is not None:
        return np.asarray(record.effective_frames, dtype=int)
    return np.arange(len(record))


def _draw(rng: np.random.Generator, pool: np.ndarray, n: int) -> np.ndarray:
    return rng.choice(pool, size=n, replace=len(pool) < n)


def sequence_tensors(
    record: SequenceRecord,
    frame_idx: np.ndarray,
    rng: np.random.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Load, (optionally) augment, and standardize the chosen frames."""
    frames = np.stack([record.load_frame(int(i)) for i in frame_idx])
    masks = np.stack([record.load_mask(int(i)) for i in frame_idx])
    if rng is not None:
        f, m = augment_pair(frames, masks, rng)
    else:
        f, m = eval_pair(frames, masks)
    return normalize_frames(f), m


def gait_tensors(record: SequenceRecord, idx: np.ndarray) -> torch.Tensor:
    """Aligned, cropped silhouettes (K, 1, 64, 44) for the chosen frames."""
    sils = []
    for i in idx:
        mask = record.load_mask(int(i))
        if not mask.any():
            raise DataError(
                f"{record.key()}: frame {int(i)} has an empty mask; "
                "filter the corpus before sampling gait frames"
            )
        sils.append(crop_silhouette(align_silhouette(mask)))
    return torch.from_numpy(np.stack(sils)).float().unsqueeze(1)


def pk_sample(
    index: DatasetIndex,
    p: int,
    kseq: int,
    t_frames: int,
    k_sils: int,
    rng: np.random.Generator,
    augment: bool = True,
    shared_frames: bool = False,
    label_map: dict[str, int] | None = None,
) -> TrainBatch:
    """Draw P distinct identities with Kseq sequences each (replacement when
    an identity is short), then T appearance frames and K gait frames per
    sequence from its effective frames. Pure function of (index, args, rng).
    """
    if p < 2 or kseq < 1:
        raise ConfigError(f"need p >= 2 and kseq >= 1, got p={p} kseq={kseq}")
    by_id: dict[str, list[SequenceRecord]] = {}
    for rec in index.entries_in("train"):
        by_id.setdefault(rec.identity, []).append(rec)
    if len(by_id) < p:
        raise ConfigError(f"train split has {len(by_id)} identities, need at least {p}")
    if label_map is None:
        label_map = index.train_label_map()

    chosen_ids = rng.choice(sorted(by_id), size=p, replace=False)
    frames, masks16, sils, labels, identities, keys = [], [], [], [], [], []
    for ident in chosen_ids:
        seqs = by_id[ident]
        picks = _draw(rng, np.arange(len(seqs)), kseq)
        for si in picks:
            rec = seqs[int(si)]
            pool = _candidate_frames(rec)
            t_idx = np.sort(_draw(rng, pool, t_frames))
            k_idx = t_idx[:k_sils] if shared_frames else np.sort(_draw(rng, pool, k_sils))
            if shared_frames and len(t_idx) < k_sils:
                k_idx = _draw(rng, pool, k_sils)
            f, m = sequence_tensors(rec, t_idx, rng if augment else None)
            frames.append(f)
            masks16.append(m)
            sils.append(gait_tensors(rec, k_idx))
            labels.append(label_map[ident])
            identities.append(ident)
            keys.append(rec.key())
    return TrainBatch(
        frames=torch.stack(frames),
        frame_masks=torch.stack(masks16),
        gait_sils=torch.stack(sils),
        labels=torch.tensor(labels, dtype=torch.long),
        identities=tuple(identities),
        sequence_keys=tuple(keys),
        p=p,
        kseq=kseq,
        t_frames=t_frames,
        k_sils=k_sils,
    )
