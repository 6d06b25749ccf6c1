"""Binary silhouette operations: effectiveness screening, alignment, cropping.

A raw mask is a 2-D array with values in {0, 1}. Alignment produces the
64x64 height-normalized, horizontally centered silhouette; cropping trims
10 columns per side to the 64x44 grid the gait branch consumes.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidInputError

ALIGNED_SIZE = 64
SIDE_CROP = 10
GAIT_WIDTH = ALIGNED_SIZE - 2 * SIDE_CROP  # 44


def _as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError("mask has zero area")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1)).all():
        raise InvalidInputError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


def foreground_ratio(mask) -> float:
    """Fraction of pixels that are foreground."""
    arr = _as_mask(mask)
    return float(arr.sum()) / float(arr.size)


def is_effective(mask, threshold: float = 0.15) -> bool:
    """True when the foreground covers at least `threshold` of the image.

    The boundary counts: a ratio exactly equal to the threshold is effective.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidInputError(f"threshold must lie in (0, 1), got {threshold}")
    return foreground_ratio(mask) >= threshold


def align_silhouette(mask, out_size: int = ALIGNED_SIZE) -> np.ndarray:
    """Crop to the foreground box, scale to full height, center horizontally.

    The tight bounding box is rescaled (bilinear, aspect preserved) so its
    height equals `out_size`; the result is placed on an `out_size` wide
    canvas at the integer offset that brings the column mass center closest
    to out_size/2, cropping overhang for very wide silhouettes.
    """
    arr = _as_mask(mask)
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    if rows.size == 0:
        raise InvalidInputError("cannot align an empty mask")
    box = arr[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].astype(np.float32)
    h, w = box.shape
    new_w = max(1, int(round(w * out_size / h)))
    t = torch.from_numpy(box)[None, None]
    sil = F.interpolate(t, size=(out_size, new_w), mode="bilinear", align_corners=False)
    sil = sil[0, 0].clamp_(0.0, 1.0).numpy()

    # Scan every out_size-wide window over the zero-padded strip and keep the
    # one whose column mass center lands nearest the canvas center.
    pad = np.zeros((out_size, new_w + 2 * out_size), dtype=np.float32)
    pad[:, out_size:out_size + new_w] = sil
    col_mass = pad.sum(axis=0)
    mass_cum = np.concatenate(([0.0], np.cumsum(col_mass)))
    moment_cum = np.concatenate(([0.0], np.cumsum(col_mass * np.arange(col_mass.size))))
    target = out_size / 2.0
    best_start, best_err = 0, np.inf
    for s in range(pad.shape[1] - out_size + 1):
        m = mass_cum[s + out_size] - mass_cum[s]
        if m <= 0.0:
            continue
        com = (moment_cum[s + out_size] - moment_cum[s]) / m - s
        err = abs(com - target)
        if err < best_err:
            best_start, best_err = s, err
    return pad[:, best_start:best_start + out_size].copy()


def crop_silhouette(aligned: np.ndarray) -> np.ndarray:
    """Trim SIDE_CROP columns from each side of a 64x64 aligned silhouette."""
    arr = np.asarray(aligned, dtype=np.float32)
    if arr.shape != (ALIGNED_SIZE, ALIGNED_SIZE):
        raise InvalidInputError(
            f"expected a {ALIGNED_SIZE}x{ALIGNED_SIZE} aligned silhouette, got {arr.shape}"
        )
    return arr[:, SIDE_CROP:ALIGNED_SIZE - SIDE_CROP].copy()


def column_mass_center(grid: np.ndarray) -> float:
    """Mass-weighted mean column index of a nonnegative 2-D grid."""
    arr = np.asarray(grid, dtype=np.float64)
    total = arr.sum()
    if total <= 0.0:
        raise InvalidInputError("grid carries no mass")
    return float((arr.sum(axis=0) * np.arange(arr.shape[1])).sum() / total)


def pool_mask(mask: np.ndarray, out_hw: tuple[int, int] = (16, 8)) -> np.ndarray:
    """Area-average a soft mask down to `out_hw` (each cell a block mean)."""
    arr = np.asarray(mask, dtype=np.float32)
    if arr.ndim != 2:
        raise InvalidInputError(f"mask must be 2-D, got shape {arr.shape}")
    t = torch.from_numpy(arr)[None, None]
    pooled = F.adaptive_avg_pool2d(t, out_hw)
    return pooled[0, 0].numpy()
