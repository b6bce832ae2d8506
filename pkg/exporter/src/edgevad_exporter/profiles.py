"""Backbone profiles: which network, which tapped stages, which preprocessing.

A profile pins everything that affects the bytes of an export: the
backbone architecture, the submodules whose activations become feature
layers 1..L, the input resolution, and the normalization constants.
"""

from __future__ import annotations

from dataclasses import dataclass

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

BACKBONES = ("mobilenet_v2", "wide_resnet_50")


class ProfileError(ValueError):
    """Unknown profile/backbone or invalid profile parameters."""


@dataclass(frozen=True)
class ExportProfile:
    """Everything needed to turn an image file into feature layers."""

    name: str
    backbone: str
    taps: tuple  # submodule paths inside the backbone, outermost first
    input_side: int = 224
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ProfileError(
                f"unknown backbone {self.backbone!r}; expected one of {BACKBONES}"
            )
        if not self.taps:
            raise ProfileError(f"profile {self.name}: needs at least one tap")
        if self.input_side <= 0:
            raise ProfileError(f"profile {self.name}: input side must be positive")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ProfileError(f"profile {self.name}: need 3 normalization constants")
        object.__setattr__(self, "taps", tuple(self.taps))


# The edge profile taps MobileNetV2 blocks at strides 8/16/32, giving the
# 28/14/7 grid hierarchy for 224x224 inputs; the server profile taps the
# first three WideResNet50 stages (56/28/14 grids).
PROFILES = {
    "mobilenet_v2": ExportProfile(
        name="mobilenet_v2",
        backbone="mobilenet_v2",
        taps=("features.6", "features.13", "features.17"),
    ),
    "wide_resnet_50": ExportProfile(
        name="wide_resnet_50",
        backbone="wide_resnet_50",
        taps=("layer1", "layer2", "layer3"),
    ),
}


def get_profile(name: str) -> ExportProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ProfileError(
            f"unknown profile {name!r}; available: {sorted(PROFILES)}"
        ) from None
