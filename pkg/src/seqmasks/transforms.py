"""Frame/mask preprocessing: sequence-level augmentation, channel
standardization, and the coarse mask grid fed to the foreground branch.
"""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .errors import InvalidInputError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

FRAME_HW = (256, 128)
MASK_HW = (16, 8)


def _to_tensors(frames: np.ndarray, masks: np.ndarray) -> tuple[torch.Tensor, torch.Tensor]:
    frames = np.asarray(frames)
    masks = np.asarray(masks)
    if frames.ndim != 4 or frames.shape[-1] != 3:
        raise InvalidInputError(f"frames must be (T, H, W, 3), got {frames.shape}")
    if masks.shape != frames.shape[:3]:
        raise InvalidInputError(
            f"masks {masks.shape} must match frames spatially {frames.shape[:3]}"
        )
    if frames.shape[1] < 1 or frames.shape[2] < 1:
        raise InvalidInputError("frames have zero spatial extent")
    f = torch.from_numpy(np.ascontiguousarray(frames)).float().permute(0, 3, 1, 2) / 255.0
    m = torch.from_numpy(np.ascontiguousarray(masks)).float().unsqueeze(1)
    return f, m


def _resize(x: torch.Tensor, hw: tuple[int, int]) -> torch.Tensor:
    return F.interpolate(x, size=hw, mode="bilinear", align_corners=False)


def augment_pair(
    frames: np.ndarray,
    masks: np.ndarray,
    rng: np.random.Generator,
    out_hw: tuple[int, int] = FRAME_HW,
    mask_hw: tuple[int, int] = MASK_HW,
    crop_margin: float = 0.05,
    p_crop: float = 0.5,
    p_flip: float = 0.5,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Jointly crop/flip a frame sequence and its masks, sequence-level.

    One crop window and one flip decision apply to every frame. Returns
    frames as (T, 3, 256, 128) floats in [0, 1] and masks area-averaged to
    soft (T, 16, 8) grids.
    """
    f, m = _to_tensors(frames, masks)
    do_crop = bool(rng.random() < p_crop)
    do_flip = bool(rng.random() < p_flip)
    if do_crop:
        big = (int(round(out_hw[0] * (1 + crop_margin))), int(round(out_hw[1] * (1 + crop_margin))))
        top = int(rng.integers(0, big[0] - out_hw[0] + 1))
        left = int(rng.integers(0, big[1] - out_hw[1] + 1))
        f = _resize(f, big)[:, :, top:top + out_hw[0], left:left + out_hw[1]]
        m = _resize(m, big)[:, :, top:top + out_hw[0], left:left + out_hw[1]]
    else:
        f = _resize(f, out_hw)
        m = _resize(m, out_hw)
    if do_flip:
        f = torch.flip(f, dims=(-1,))
        m = torch.flip(m, dims=(-1,))
    m = F.adaptive_avg_pool2d(m, mask_hw)
    return f.contiguous(), m[:, 0].contiguous()


def eval_pair(
    frames: np.ndarray,
    masks: np.ndarray,
    out_hw: tuple[int, int] = FRAME_HW,
    mask_hw: tuple[int, int] = MASK_HW,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Deterministic resize-only path used at test time."""
    f, m = _to_tensors(frames, masks)
    f = _resize(f, out_hw)
    m = F.adaptive_avg_pool2d(_resize(m, out_hw), mask_hw)
    return f.contiguous(), m[:, 0].contiguous()


def normalize_frames(frames: torch.Tensor | np.ndarray) -> torch.Tensor:
    """Standardize (..., 3, H, W) frames in [0, 1] with the conventional
    per-channel statistics of large-scale natural image pretraining."""
    if isinstance(frames, np.ndarray):
        if frames.dtype == np.uint8:
            if frames.ndim < 3 or frames.shape[-1] != 3:
                raise InvalidInputError(f"uint8 frames must be (..., H, W, 3), got {frames.shape}")
            frames = torch.from_numpy(np.ascontiguousarray(frames)).float() / 255.0
            frames = frames.movedim(-1, -3)
        else:
            frames = torch.from_numpy(np.ascontiguousarray(frames)).float()
    if frames.shape[-3] != 3:
        raise InvalidInputError(f"expected channel-first RGB, got shape {tuple(frames.shape)}")
    shape = (3, 1, 1)
    mean = frames.new_tensor(IMAGENET_MEAN).view(shape)
    std = frames.new_tensor(IMAGENET_STD).view(shape)
    return (frames - mean) / std


def denormalize_frames(frames: torch.Tensor) -> torch.Tensor:
    """Inverse of normalize_frames, back to [0, 1] channel-first floats."""
    shape = (3, 1, 1)
    mean = frames.new_tensor(IMAGENET_MEAN).view(shape)
    std = frames.new_tensor(IMAGENET_STD).view(shape)
    return frames * std + mean
