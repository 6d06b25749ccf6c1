"""Frame backbones behind a fixed contract: (N, 3, H, W) -> (N, C, H/16, W/16)."""
from __future__ import annotations

import logging
from pathlib import Path

import torch
import torch.nn as nn

from ..errors import ConfigError, InvalidInputError

log = logging.getLogger(__name__)


class SmallBackbone(nn.Module):
    """Four stride-2 conv stages; the desk-scale stand-in for the deep backbone."""

    def __init__(self, out_channels: int = 128):
        super().__init__()
        chans = (3, out_channels // 8, out_channels // 4, out_channels // 2, out_channels)
        stages = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            stages += [
                nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
            ]
        self.stages = nn.Sequential(*stages)
        self.out_channels = out_channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_input(x)
        return self.stages(x)


class ResNet50Backbone(nn.Module):
    """ResNet-50 without its classifier head and with the final stride set to 1,
    so a 256x128 input yields 16x8 feature maps instead of 8x4.
    """

    def __init__(self, weights_path: str | Path | None = None):
        super().__init__()
        from torchvision.models import resnet50

        net = resnet50(weights=None)
        net.layer4[0].conv2.stride = (1, 1)
        net.layer4[0].downsample[0].stride = (1, 1)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.layer1, self.layer2 = net.layer1, net.layer2
        self.layer3, self.layer4 = net.layer3, net.layer4
        self.out_channels = 2048
        if weights_path:
            state = torch.load(weights_path, map_location="cpu", weights_only=True)
            result = net.load_state_dict(state, strict=False)
            missing = [k for k in result.missing_keys if not k.startswith("fc.")]
            if missing:
                raise ConfigError(f"backbone weights missing keys: {missing[:5]}")
            log.info("loaded backbone weights from %s", weights_path)
        else:
            log.info("no backbone weight file given; using random initialization")

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_input(x)
        x = self.stem(x)
        x = self.layer1(x)
        x = self.layer2(x)
        x = self.layer3(x)
        return self.layer4(x)


def _check_input(x: torch.Tensor) -> None:
    if x.dim() != 4 or x.size(1) != 3:
        raise InvalidInputError(f"backbone expects (N, 3, H, W), got {tuple(x.shape)}")
    if x.size(2) % 16 or x.size(3) % 16:
        raise InvalidInputError(f"input spatial size must be divisible by 16, got {tuple(x.shape[2:])}")


def build_backbone(name: str, weights_path: str | Path | None = None, out_channels: int = 128) -> nn.Module:
    if name == "small":
        return SmallBackbone(out_channels=out_channels)
    if name == "resnet50":
        return ResNet50Backbone(weights_path=weights_path)
    raise ConfigError(f"unknown backbone '{name}' (expected 'small' or 'resnet50')")
