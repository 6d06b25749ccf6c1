"""Triplet and label-smoothed softmax losses, and their weighted composite.

The composite sums three branch losses: hard-mining triplet + smoothed
softmax on both appearance features, all-triplet + smoothed softmax on each
gait head, and a hard-mining triplet alone on the fused descriptor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import torch
import torch.nn.functional as F

from .errors import ConfigError, InvalidInputError

log = logging.getLogger(__name__)


def pairwise_dist(emb: torch.Tensor) -> torch.Tensor:
    """Euclidean distance matrix of the embedding rows.

    Exactly symmetric with an exactly zero diagonal (distances come from
    elementwise differences, not the Gram-matrix shortcut).
    """
    if emb.dim() != 2 or emb.size(0) < 2:
        raise InvalidInputError(f"need an N x D matrix with N >= 2, got {tuple(emb.shape)}")
    return (emb.unsqueeze(1) - emb.unsqueeze(0)).norm(dim=-1)


def _triplet_masks(labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    same = labels.unsqueeze(0) == labels.unsqueeze(1)
    eye = torch.eye(labels.numel(), dtype=torch.bool, device=labels.device)
    return same & ~eye, ~same


def batch_hard_triplet(emb: torch.Tensor, labels: torch.Tensor, margin: float) -> torch.Tensor:
    """Mean over anchors of hinge(hardest positive - hardest negative + margin).

    Anchors whose class has a single sample are skipped; a single-class batch
    has no negatives and yields 0, both with a logged warning.
    """
    labels = torch.as_tensor(labels, device=emb.device).reshape(-1)
    dist = pairwise_dist(emb)
    pos_mask, neg_mask = _triplet_masks(labels)
    if not neg_mask.any():
        log.warning("batch-hard triplet: single-class batch, loss defined as 0")
        return emb.new_zeros(())
    valid = pos_mask.any(dim=1)
    if not valid.all():
        log.warning(
            "batch-hard triplet: skipping %d anchor(s) without positives",
            int((~valid).sum()),
        )
    if not valid.any():
        return emb.new_zeros(())
    hardest_pos = dist.masked_fill(~pos_mask, float("-inf")).max(dim=1).values
    hardest_neg = dist.masked_fill(~neg_mask, float("inf")).min(dim=1).values
    hinge = F.relu(hardest_pos - hardest_neg + margin)
    return hinge[valid].mean()


def batch_all_triplet(emb: torch.Tensor, labels: torch.Tensor, margin: float) -> torch.Tensor:
    """Sum of active triplet hinges divided by the count of positive-loss triplets."""
    labels = torch.as_tensor(labels, device=emb.device).reshape(-1)
    dist = pairwise_dist(emb)
    pos_mask, neg_mask = _triplet_masks(labels)
    if not neg_mask.any():
        log.warning("batch-all triplet: single-class batch, loss defined as 0")
        return emb.new_zeros(())
    # hinge[a, p, n] = d(a, p) - d(a, n) + margin over valid (a, p, n)
    hinge = dist.unsqueeze(2) - dist.unsqueeze(1) + margin
    valid = pos_mask.unsqueeze(2) & neg_mask.unsqueeze(1)
    hinge = F.relu(hinge) * valid
    n_active = int(((hinge > 0) & valid).sum())
    if n_active == 0:
        return emb.new_zeros(())
    return hinge.sum() / n_active


def lsr_softmax(logits: torch.Tensor, labels: torch.Tensor, eps: float = 0.1) -> torch.Tensor:
    """Cross-entropy against label-smoothed targets, averaged over the batch.

    The true class gets probability 1 - eps + eps/C, every other class eps/C.
    """
    if logits.dim() != 2 or logits.size(1) < 2:
        raise InvalidInputError(f"need N x C logits with C >= 2, got {tuple(logits.shape)}")
    labels = torch.as_tensor(labels, device=logits.device).reshape(-1)
    n, c = logits.shape
    if labels.numel() != n:
        raise InvalidInputError("labels length must match the logit rows")
    if labels.min() < 0 or labels.max() >= c:
        raise InvalidInputError(f"label out of range for {c} classes")
    logp = F.log_softmax(logits, dim=1)
    true_term = logp.gather(1, labels.view(-1, 1)).squeeze(1)
    return (-(1.0 - eps) * true_term - (eps / c) * logp.sum(dim=1)).mean()


@dataclass(frozen=True)
class LossWeights:
    """Branch weights, triplet margins, and softmax smoothing."""

    lambda1: float = 1.0  # fused descriptor
    lambda2: float = 1.0  # appearance
    lambda3: float = 1.0  # gait
    margin_hard: float = 0.3
    margin_all: float = 0.3
    lsr_eps: float = 0.1

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")
        if not 0.0 <= self.lsr_eps < 1.0:
            raise ConfigError(f"lsr_eps must lie in [0, 1), got {self.lsr_eps}")


@dataclass
class LossBreakdown:
    """Per-term scalars of one training step, in fixed CSV column order."""

    triplet_hard_global: float = 0.0
    softmax_global: float = 0.0
    triplet_hard_fg: float = 0.0
    softmax_fg: float = 0.0
    triplet_all_gait_main: float = 0.0
    softmax_gait_main: float = 0.0
    triplet_all_gait_mgp: float = 0.0
    softmax_gait_mgp: float = 0.0
    triplet_hard_fusion: float = 0.0
    loss_appearance: float = 0.0
    loss_gait: float = 0.0
    loss_fusion: float = 0.0
    loss_total: float = 0.0

    @classmethod
    def csv_columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list[float]:
        return [getattr(self, f.name) for f in fields(self)]


def total_loss(
    labels: torch.Tensor,
    weights: LossWeights,
    *,
    global_emb: torch.Tensor | None = None,
    global_logits: torch.Tensor | None = None,
    fg_emb: torch.Tensor | None = None,
    fg_logits: torch.Tensor | None = None,
    gait_main_emb: torch.Tensor | None = None,
    gait_main_logits: torch.Tensor | None = None,
    gait_mgp_emb: torch.Tensor | None = None,
    gait_mgp_logits: torch.Tensor | None = None,
    fused_emb: torch.Tensor | None = None,
    use_foreground: bool = True,
    use_gait: bool = True,
) -> tuple[torch.Tensor, LossBreakdown]:
    """Compose the weighted training objective for the active branches.

    Returns the differentiable total plus a detached per-term breakdown.
    """

    def require(name: str, value):
        if value is None:
            raise ConfigError(f"active configuration requires '{name}'")
        return value

    def scalar(t: torch.Tensor) -> float:
        return float(t.detach())

    bd = LossBreakdown()
    require("global_emb", global_emb)
    require("global_logits", global_logits)
    require("fused_emb", fused_emb)

    appearance = batch_hard_triplet(global_emb, labels, weights.margin_hard)
    bd.triplet_hard_global = scalar(appearance)
    sm = lsr_softmax(global_logits, labels, weights.lsr_eps)
    bd.softmax_global = scalar(sm)
    appearance = appearance + sm
    if use_foreground:
        t = batch_hard_triplet(require("fg_emb", fg_emb), labels, weights.margin_hard)
        s = lsr_softmax(require("fg_logits", fg_logits), labels, weights.lsr_eps)
        bd.triplet_hard_fg, bd.softmax_fg = scalar(t), scalar(s)
        appearance = appearance + t + s

    if use_gait:
        tm = batch_all_triplet(require("gait_main_emb", gait_main_emb), labels, weights.margin_all)
        sm_main = lsr_softmax(require("gait_main_logits", gait_main_logits), labels, weights.lsr_eps)
        tg = batch_all_triplet(require("gait_mgp_emb", gait_mgp_emb), labels, weights.margin_all)
        sm_mgp = lsr_softmax(require("gait_mgp_logits", gait_mgp_logits), labels, weights.lsr_eps)
        bd.triplet_all_gait_main, bd.softmax_gait_main = scalar(tm), scalar(sm_main)
        bd.triplet_all_gait_mgp, bd.softmax_gait_mgp = scalar(tg), scalar(sm_mgp)
        gait = tm + sm_main + tg + sm_mgp
    else:
        gait = fused_emb.new_zeros(())

    fusion = batch_hard_triplet(fused_emb, labels, weights.margin_hard)
    bd.triplet_hard_fusion = scalar(fusion)

    total = weights.lambda1 * fusion + weights.lambda2 * appearance + weights.lambda3 * gait
    bd.loss_appearance = scalar(appearance)
    bd.loss_gait = scalar(gait)
    bd.loss_fusion = scalar(fusion)
    bd.loss_total = scalar(total)
    return total, bd
