"""Loading torchvision backbones and tapping intermediate activations."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
import torchvision.models as tvm

from .profiles import ExportProfile, ProfileError


class MissingWeightsError(RuntimeError):
    """Requested weights could not be loaded (no file / no download)."""


_BUILDERS = {
    "mobilenet_v2": tvm.mobilenet_v2,
    "wide_resnet_50": tvm.wide_resnet50_2,
}


def load_backbone(
    profile: ExportProfile, weights: str = "pretrained", seed: int = 0
) -> torch.nn.Module:
    """Build the profile's backbone in inference mode.

    ``weights`` selects the parameter source:

    - ``"pretrained"`` — torchvision's published ImageNet weights (may
      download; raises MissingWeightsError when unavailable);
    - ``"random"`` — deterministic seeded initialization, for offline
      testing of the export contract;
    - any other string — path to a local ``state_dict`` file.
    """
    builder = _BUILDERS[profile.backbone]
    if weights == "random":
        torch.manual_seed(seed)
        model = builder(weights=None)
    elif weights == "pretrained":
        try:
            model = builder(weights="DEFAULT")
        except Exception as exc:
            raise MissingWeightsError(
                f"could not load pretrained {profile.backbone} weights: {exc}"
            ) from exc
    else:
        path = Path(weights)
        if not path.is_file():
            raise MissingWeightsError(f"weights file not found: {path}")
        model = builder(weights=None)
        state = torch.load(path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    model.requires_grad_(False)
    return model


def weight_hash(model: torch.nn.Module) -> str:
    """SHA-256 over all parameters/buffers in state-dict order."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class FeatureExtractor:
    """Forward hooks on the profile's taps, reported in tap order."""

    def __init__(self, model: torch.nn.Module, profile: ExportProfile):
        self.model = model
        self.profile = profile
        self._captured: dict = {}
        for tap in profile.taps:
            try:
                module = model.get_submodule(tap)
            except AttributeError as exc:
                raise ProfileError(
                    f"profile {profile.name}: backbone has no submodule {tap!r}"
                ) from exc
            module.register_forward_hook(self._make_hook(tap))

    def _make_hook(self, tap: str):
        def hook(_module, _inputs, output):
            self._captured[tap] = output

        return hook

    def __call__(self, batch: torch.Tensor) -> list:
        """Run one (1, 3, H, W) batch; return float32 (C, H, W) arrays."""
        self._captured.clear()
        with torch.no_grad():
            self.model(batch)
        out = []
        for tap in self.profile.taps:
            if tap not in self._captured:
                raise ProfileError(
                    f"profile {self.profile.name}: tap {tap!r} saw no activation"
                )
            out.append(
                self._captured[tap][0].detach().cpu().numpy().astype(np.float32)
            )
        return out
