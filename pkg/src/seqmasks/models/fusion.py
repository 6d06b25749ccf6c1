"""Feature fusion: branch concatenation, the channel-attention gate, and the
full multi-branch network with its classifier heads.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import ConfigError, InvalidInputError
from .appearance import AppearanceNet
from .gait import GaitFeatures, GaitNet

# Named configurations for the two/three-branch, concat/fused comparison grid.
VARIANTS = {
    "GGConcat": dict(use_foreground=False, use_gait=True, use_ffm=False),
    "GGFusion": dict(use_foreground=False, use_gait=True, use_ffm=True),
    "AGConcat": dict(use_foreground=True, use_gait=True, use_ffm=False),
    "AGFusion": dict(use_foreground=True, use_gait=True, use_ffm=True),
}


class FeatureFusion(nn.Module):
    """Channel attention with residual: y = x + x * sigmoid(fc2(relu(fc1(x)))).

    fc1 squeezes by `ratio`, fc2 expands back; the gate rescales each channel
    of the concatenated descriptor between 1x and 2x.
    """

    def __init__(self, dim: int, ratio: int = 8):
        super().__init__()
        if dim % ratio:
            raise ConfigError(f"fusion dim {dim} not divisible by ratio {ratio}")
        self.fc1 = nn.Linear(dim, dim // ratio)
        self.fc2 = nn.Linear(dim // ratio, dim)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc2(torch.relu(self.fc1(x))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + x * self.gate(x)


@dataclass
class FeatureBundle:
    """All per-sequence features one forward produces.

    `concat` is laid out [global | foreground | gait] (absent branches are
    skipped); `fused` equals `concat` when the fusion gate is disabled and is
    always the retrieval descriptor.
    """

    global_emb: torch.Tensor
    fused: torch.Tensor
    concat: torch.Tensor
    global_pre: torch.Tensor
    fg_emb: torch.Tensor | None = None
    fg_pre: torch.Tensor | None = None
    gait: GaitFeatures | None = None
    logits: dict[str, torch.Tensor] | None = None

    @property
    def gait_emb(self) -> torch.Tensor | None:
        return None if self.gait is None else self.gait.inference_512


class FusionNetwork(nn.Module):
    """Appearance + gait branches concatenated into one retrieval descriptor."""

    def __init__(
        self,
        backbone: nn.Module,
        num_classes: int,
        embed_dim: int = 512,
        bottleneck_hidden: int = 256,
        norm: str = "batch",
        use_foreground: bool = True,
        use_gait: bool = True,
        use_ffm: bool = True,
        gait_channels: tuple[int, int, int] = (32, 64, 128),
        ffm_ratio: int = 8,
    ):
        super().__init__()
        if num_classes < 2:
            raise ConfigError("need at least 2 identity classes")
        self.use_foreground = use_foreground
        self.use_gait = use_gait
        self.use_ffm = use_ffm
        self.appearance = AppearanceNet(
            backbone,
            embed_dim=embed_dim,
            bottleneck_hidden=bottleneck_hidden,
            norm=norm,
            use_foreground=use_foreground,
        )
        self.gait = GaitNet(channels=gait_channels) if use_gait else None
        gait_dim = 2 * self.gait.head_dim if use_gait else 0
        self.descriptor_dim = embed_dim * (1 + int(use_foreground)) + gait_dim
        self.ffm = FeatureFusion(self.descriptor_dim, ratio=ffm_ratio) if use_ffm else None

        heads = {"global": nn.Linear(embed_dim, num_classes)}
        if use_foreground:
            heads["foreground"] = nn.Linear(embed_dim, num_classes)
        if use_gait:
            heads["gait_main"] = nn.Linear(self.gait.head_dim, num_classes)
            heads["gait_mgp"] = nn.Linear(self.gait.head_dim, num_classes)
        self.classifiers = nn.ModuleDict(heads)
        self.num_classes = num_classes

    @classmethod
    def from_variant(cls, variant: str, backbone: nn.Module, num_classes: int, **kwargs) -> "FusionNetwork":
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{variant}' (one of {sorted(VARIANTS)})")
        return cls(backbone, num_classes, **VARIANTS[variant], **kwargs)

    def forward(
        self,
        frames: torch.Tensor,
        frame_masks: torch.Tensor | None,
        gait_sils: torch.Tensor | None,
        mode: str = "train",
    ) -> FeatureBundle:
        if mode not in ("train", "eval"):
            raise InvalidInputError(f"mode must be 'train' or 'eval', got {mode!r}")
        app = self.appearance(frames, frame_masks if self.use_foreground else None)
        parts = [app["global_emb"]]
        gait_feats = None
        if self.use_foreground:
            parts.append(app["fg_emb"])
        if self.use_gait:
            if gait_sils is None:
                raise InvalidInputError("gait branch is active but no silhouettes were given")
            gait_feats = self.gait(gait_sils)
            parts.append(gait_feats.inference_512)
        concat = torch.cat(parts, dim=1)
        fused = self.ffm(concat) if self.use_ffm else concat

        logits = None
        if mode == "train":
            logits = {"global": self.classifiers["global"](app["global_emb"])}
            if self.use_foreground:
                logits["foreground"] = self.classifiers["foreground"](app["fg_emb"])
            if self.use_gait:
                logits["gait_main"] = self.classifiers["gait_main"](gait_feats.main_256)
                logits["gait_mgp"] = self.classifiers["gait_mgp"](gait_feats.mgp_256)
        return FeatureBundle(
            global_emb=app["global_emb"],
            fused=fused,
            concat=concat,
            global_pre=app["global_pre"],
            fg_emb=app.get("fg_emb"),
            fg_pre=app.get("fg_pre"),
            gait=gait_feats,
            logits=logits,
        )

    def component_state_dicts(self) -> dict[str, dict]:
        """Named parameter groups for checkpointing."""
        groups: dict[str, dict] = {
            "backbone": self.appearance.backbone.state_dict(),
            "global_bottleneck": self.appearance.global_bottleneck.state_dict(),
            "classifiers": self.classifiers.state_dict(),
        }
        if self.use_foreground:
            groups["fg_bottleneck"] = self.appearance.fg_bottleneck.state_dict()
        if self.use_gait:
            groups["gait_main"] = {
                "encoder": self.gait.encoder.state_dict(),
                "set_pools": self.gait.set_pools.state_dict(),
            }
            groups["gait_mgp"] = self.gait.mgp.state_dict()
            groups["gait_heads"] = self.gait.heads.state_dict()
        if self.use_ffm:
            groups["ffm"] = self.ffm.state_dict()
        return groups

    def load_component_state_dicts(self, groups: dict[str, dict], names: list[str] | None = None) -> None:
        """Restore the given component groups (all present ones by default)."""
        own = self.component_state_dicts()
        for name in names if names is not None else list(groups):
            if name not in own:
                raise ConfigError(f"checkpoint component '{name}' not present in this configuration")
            if name not in groups:
                raise ConfigError(f"checkpoint is missing component '{name}'")
            try:
                if name == "backbone":
                    self.appearance.backbone.load_state_dict(groups[name])
                elif name == "global_bottleneck":
                    self.appearance.global_bottleneck.load_state_dict(groups[name])
                elif name == "fg_bottleneck":
                    self.appearance.fg_bottleneck.load_state_dict(groups[name])
                elif name == "classifiers":
                    self.classifiers.load_state_dict(groups[name])
                elif name == "gait_main":
                    self.gait.encoder.load_state_dict(groups[name]["encoder"])
                    self.gait.set_pools.load_state_dict(groups[name]["set_pools"])
                elif name == "gait_mgp":
                    self.gait.mgp.load_state_dict(groups[name])
                elif name == "gait_heads":
                    self.gait.heads.load_state_dict(groups[name])
                elif name == "ffm":
                    self.ffm.load_state_dict(groups[name])
                else:
                    raise ConfigError(f"unknown checkpoint component '{name}'")
            except RuntimeError as exc:
                raise ConfigError(f"component '{name}' does not fit this model: {exc}") from exc
