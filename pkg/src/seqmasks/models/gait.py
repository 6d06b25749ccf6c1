"""Gait branch: a silhouette set encoder with order-free statistics pooling,
an auxiliary multilayer pipeline, and two 256-d training heads.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..errors import InvalidInputError

GAIT_INPUT_HW = (64, 44)


@dataclass
class GaitStageMaps:
    """Per-frame feature maps after each conv stage, shapes (N, K, C, H, W)."""

    stage1: torch.Tensor
    stage2: torch.Tensor
    stage3: torch.Tensor


@dataclass
class GaitFeatures:
    """Pooled gait vectors; the 512-d concatenation is the retrieval feature."""

    main_128: torch.Tensor
    mgp_128: torch.Tensor
    main_256: torch.Tensor
    mgp_256: torch.Tensor
    inference_512: torch.Tensor


class SetPool(nn.Module):
    """Aggregate a frame set with order-free statistics.

    Max, mean, and lower-median maps are fused by a 1x1 conv into a sigmoid
    attention gate applied residually on the max map. Statistics come from
    per-location sorted values, so any input permutation yields bit-identical
    output and duplicating the set leaves it unchanged.
    """

    def __init__(self, channels: int):
        super().__init__()
        self.fuse = nn.Conv2d(3 * channels, channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5:
            raise InvalidInputError(f"set pooling expects (N, K, C, H, W), got {tuple(x.shape)}")
        k = x.size(1)
        if k < 1:
            raise InvalidInputError("set pooling needs at least one frame")
        vals, _ = torch.sort(x, dim=1)
        s_max = vals[:, -1]
        s_med = vals[:, (k - 1) // 2]
        s_mean = vals.mean(dim=1)
        gate = torch.sigmoid(self.fuse(torch.cat((s_max, s_mean, s_med), dim=1)))
        return s_max + s_max * gate


def _conv_stage(cin: int, cout: int, first_kernel: int, pool: bool) -> nn.Sequential:
    layers: list[nn.Module] = [
        nn.Conv2d(cin, cout, first_kernel, padding=first_kernel // 2, bias=False),
        nn.LeakyReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1, bias=False),
        nn.LeakyReLU(inplace=True),
    ]
    if pool:
        layers.append(nn.MaxPool2d(2))
    return nn.Sequential(*layers)


class FrameEncoder(nn.Module):
    """Shared per-frame conv tower: 32 -> 64 -> 128 channels, pooling twice."""

    def __init__(self, channels: tuple[int, int, int] = (32, 64, 128)):
        super().__init__()
        c1, c2, c3 = channels
        self.stage1 = _conv_stage(1, c1, 5, pool=True)
        self.stage2 = _conv_stage(c1, c2, 3, pool=True)
        self.stage3 = _conv_stage(c2, c3, 3, pool=False)
        self.channels = channels

    def forward(self, sils: torch.Tensor) -> GaitStageMaps:
        if sils.dim() != 5 or sils.size(2) != 1:
            raise InvalidInputError(f"expected (N, K, 1, H, W) silhouettes, got {tuple(sils.shape)}")
        if sils.shape[-2:] != GAIT_INPUT_HW:
            raise InvalidInputError(
                f"expected {GAIT_INPUT_HW} silhouettes, got {tuple(sils.shape[-2:])}"
            )
        n, k = sils.shape[:2]
        flat = sils.reshape(n * k, 1, *sils.shape[-2:])
        m1 = self.stage1(flat)
        m2 = self.stage2(m1)
        m3 = self.stage3(m2)
        unflat = lambda m: m.reshape(n, k, *m.shape[1:])
        return GaitStageMaps(unflat(m1), unflat(m2), unflat(m3))


def global_pool(maps: torch.Tensor) -> torch.Tensor:
    """Sum of spatial average pooling and spatial max pooling, per channel."""
    if maps.dim() < 3:
        raise InvalidInputError(f"expected (..., C, H, W), got {tuple(maps.shape)}")
    return maps.mean(dim=(-2, -1)) + maps.amax(dim=(-2, -1))


class GaitNet(nn.Module):
    """Full gait branch over an unordered silhouette set."""

    def __init__(self, channels: tuple[int, int, int] = (32, 64, 128), head_dim: int = 256):
        super().__init__()
        c1, c2, c3 = channels
        self.encoder = FrameEncoder(channels)
        self.set_pools = nn.ModuleList([SetPool(c1), SetPool(c2), SetPool(c3)])
        # Mirrors stages 2-3 with its own parameters, seeded by the stage-1
        # set feature and re-injecting each deeper set feature additively.
        self.mgp = nn.ModuleList(
            [_conv_stage(c1, c2, 3, pool=True), _conv_stage(c2, c3, 3, pool=False)]
        )
        self.heads = nn.ModuleDict(
            {"main": nn.Linear(c3, head_dim), "mgp": nn.Linear(c3, head_dim)}
        )
        self.head_dim = head_dim

    def set_features(self, maps: GaitStageMaps) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return (
            self.set_pools[0](maps.stage1),
            self.set_pools[1](maps.stage2),
            self.set_pools[2](maps.stage3),
        )

    def mgp_forward(self, sp1: torch.Tensor, sp2: torch.Tensor, sp3: torch.Tensor) -> torch.Tensor:
        g = self.mgp[0](sp1) + sp2
        return self.mgp[1](g) + sp3

    def forward(self, sils: torch.Tensor) -> GaitFeatures:
        sp1, sp2, sp3 = self.set_features(self.encoder(sils))
        main_128 = global_pool(sp3)
        mgp_128 = global_pool(self.mgp_forward(sp1, sp2, sp3))
        main_256 = self.heads["main"](main_128)
        mgp_256 = self.heads["mgp"](mgp_128)
        return GaitFeatures(
            main_128=main_128,
            mgp_128=mgp_128,
            main_256=main_256,
            mgp_256=mgp_256,
            inference_512=torch.cat((main_256, mgp_256), dim=1),
        )
