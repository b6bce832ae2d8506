"""Offline exporter: pretrained CNN features and resized images, written
in the formats the `edgevad` package reads."""

from .backbone import FeatureExtractor, MissingWeightsError, load_backbone, weight_hash
from .export import export, export_images, load_image_rgb, load_image_tensor, load_mask
from .profiles import (
    BACKBONES,
    PROFILES,
    ExportProfile,
    ProfileError,
    get_profile,
)

__version__ = "0.1.0"
