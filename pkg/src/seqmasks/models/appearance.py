"""Appearance branch: per-frame backbone maps pooled into global and
foreground sequence embeddings, each reduced by its own bottleneck.
"""
from __future__ import annotations

import logging

import torch
import torch.nn as nn

from ..errors import ConfigError, InvalidInputError

log = logging.getLogger(__name__)

EMPTY_MASK_EPS = 1e-6


class Bottleneck(nn.Module):
    """Two FC layers with a normalization + ReLU after each; far fewer
    parameters than one dense in_dim x out_dim layer.
    """

    def __init__(self, in_dim: int = 2048, out_dim: int = 512, hidden: int = 256, norm: str = "batch"):
        super().__init__()
        self.fc1 = nn.Linear(in_dim, hidden)
        self.norm1 = _make_norm(norm, hidden)
        self.fc2 = nn.Linear(hidden, out_dim)
        self.norm2 = _make_norm(norm, out_dim)
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.relu(self.norm1(self.fc1(x)))
        return self.relu(self.norm2(self.fc2(x)))


def _make_norm(kind: str, dim: int) -> nn.Module:
    if kind == "batch":
        return nn.BatchNorm1d(dim)
    if kind == "layer":
        return nn.LayerNorm(dim)
    raise ConfigError(f"unknown normalization '{kind}' (expected 'batch' or 'layer')")


def masked_avg_pool(maps: torch.Tensor, masks: torch.Tensor, eps: float = EMPTY_MASK_EPS) -> torch.Tensor:
    """Average feature maps over the mask-weighted spatial support.

    maps: (..., C, H, W), masks: (..., H, W) with values in [0, 1].
    Entries whose mask mass falls below `eps` fall back to the plain
    spatial mean (counted in a warning) so empty segmentations stay finite.
    """
    if maps.shape[-2:] != masks.shape[-2:] or maps.shape[:-3] != masks.shape[:-2]:
        raise InvalidInputError(
            f"maps {tuple(maps.shape)} and masks {tuple(masks.shape)} are not aligned"
        )
    m = masks.unsqueeze(-3)
    mass = m.sum(dim=(-2, -1))
    weighted = (maps * m).sum(dim=(-2, -1))
    plain = maps.sum(dim=(-2, -1)) / float(maps.shape[-2] * maps.shape[-1])
    empty = mass < eps
    n_empty = int(empty.sum())
    if n_empty:
        log.warning("masked_avg_pool: %d frame(s) with empty mask fell back to plain mean", n_empty)
    denom = torch.where(empty, torch.ones_like(mass), mass)
    return torch.where(empty, plain, weighted / denom)


class AppearanceNet(nn.Module):
    """Global and foreground sequence embeddings from one shared backbone."""

    def __init__(
        self,
        backbone: nn.Module,
        embed_dim: int = 512,
        bottleneck_hidden: int = 256,
        norm: str = "batch",
        use_foreground: bool = True,
    ):
        super().__init__()
        self.backbone = backbone
        self.use_foreground = use_foreground
        feat_dim = backbone.out_channels
        self.global_bottleneck = Bottleneck(feat_dim, embed_dim, bottleneck_hidden, norm)
        self.fg_bottleneck = (
            Bottleneck(feat_dim, embed_dim, bottleneck_hidden, norm) if use_foreground else None
        )

    def frame_vectors(
        self, frames: torch.Tensor, masks: torch.Tensor | None
    ) -> tuple[torch.Tensor, torch.Tensor | None]:
        """Per-frame pooled vectors: ((N, T, C) global, (N, T, C) foreground)."""
        if frames.dim() != 5:
            raise InvalidInputError(f"frames must be (N, T, 3, H, W), got {tuple(frames.shape)}")
        n, t = frames.shape[:2]
        maps = self.backbone(frames.reshape(n * t, *frames.shape[2:]))
        maps = maps.reshape(n, t, *maps.shape[1:])
        # sum/count instead of mean(): bit-identical to the masked path on an
        # all-ones mask (same reduction order, same denominator)
        global_vec = maps.sum(dim=(-2, -1)) / float(maps.shape[-2] * maps.shape[-1])
        fg_vec = None
        if self.use_foreground:
            if masks is None:
                raise InvalidInputError("foreground branch needs per-frame masks")
            if masks.shape[-2:] != maps.shape[-2:]:
                raise InvalidInputError(
                    f"mask spatial size {tuple(masks.shape[-2:])} must equal "
                    f"backbone output size {tuple(maps.shape[-2:])}"
                )
            seq_empty = masks.sum(dim=(-3, -2, -1)) < EMPTY_MASK_EPS
            if bool(seq_empty.any()):
                log.warning(
                    "foreground branch: %d sequence(s) have no foreground at all; "
                    "falling back to the global features for them",
                    int(seq_empty.sum()),
                )
            fg_vec = masked_avg_pool(maps, masks)
        return global_vec, fg_vec

    def forward(self, frames: torch.Tensor, masks: torch.Tensor | None) -> dict[str, torch.Tensor]:
        """Sequence-level embeddings; temporal aggregation is the plain mean."""
        global_vec, fg_vec = self.frame_vectors(frames, masks)
        out = {"global_pre": global_vec.mean(dim=1)}
        out["global_emb"] = self.global_bottleneck(out["global_pre"])
        if self.use_foreground:
            out["fg_pre"] = fg_vec.mean(dim=1)
            out["fg_emb"] = self.fg_bottleneck(out["fg_pre"])
        return out
