from .appearance import AppearanceNet, Bottleneck, masked_avg_pool
from .backbones import ResNet50Backbone, SmallBackbone, build_backbone
from .fusion import VARIANTS, FeatureBundle, FeatureFusion, FusionNetwork
from .gait import GaitFeatures, GaitNet, GaitStageMaps, SetPool, FrameEncoder, global_pool

__all__ = [
    "AppearanceNet",
    "Bottleneck",
    "masked_avg_pool",
    "ResNet50Backbone",
    "SmallBackbone",
    "build_backbone",
    "VARIANTS",
    "FeatureBundle",
    "FeatureFusion",
    "FusionNetwork",
    "GaitFeatures",
    "GaitNet",
    "GaitStageMaps",
    "SetPool",
    "FrameEncoder",
    "global_pool",
]
