"""Profile definitions and validation."""

from __future__ import annotations

import pytest

from edgevad_exporter import PROFILES, ExportProfile, ProfileError, get_profile


def test_stock_profiles():
    assert set(PROFILES) == {"mobilenet_v2", "wide_resnet_50"}
    for profile in PROFILES.values():
        assert profile.input_side == 224
        assert len(profile.taps) == 3
        assert len(profile.mean) == 3 and len(profile.std) == 3
    assert get_profile("mobilenet_v2").backbone == "mobilenet_v2"
    assert get_profile("wide_resnet_50").taps == ("layer1", "layer2", "layer3")


def test_get_profile_unknown():
    with pytest.raises(ProfileError, match="unknown profile"):
        get_profile("resnet18")


def test_profile_validation():
    with pytest.raises(ProfileError, match="backbone"):
        ExportProfile(name="x", backbone="vgg16", taps=("features.1",))
    with pytest.raises(ProfileError, match="tap"):
        ExportProfile(name="x", backbone="mobilenet_v2", taps=())
    with pytest.raises(ProfileError, match="side"):
        ExportProfile(
            name="x", backbone="mobilenet_v2", taps=("features.1",), input_side=0
        )
    with pytest.raises(ProfileError, match="normalization"):
        ExportProfile(
            name="x", backbone="mobilenet_v2", taps=("features.1",), mean=(0.5,)
        )
