"""Feature export: format conformance, determinism, manifest contents."""

from __future__ import annotations

import json

import numpy as np
import pytest
import torch

from edgevad import (
    RunConfig,
    load_feature_dataset,
    read_feature_file,
    run_suite,
)
from edgevad.data_io import serialize_feature_stack
from edgevad_exporter import (
    FeatureExtractor,
    MissingWeightsError,
    ExportProfile,
    ProfileError,
    export,
    export_images,
    get_profile,
    load_backbone,
    load_mask,
    weight_hash,
)

from .conftest import build_image_tree, save_png


# ---------------------------------------------------------------------------
# Manifest and file contents


@pytest.mark.acceptance(name="exporter-manifest-provenance")
def test_manifest_records_provenance(exported):
    _, manifest = exported
    assert manifest["backbone"] == "mobilenet_v2"
    assert manifest["profile"] == "mobilenet_v2"
    assert manifest["taps"] == ["features.6", "features.13", "features.17"]
    assert manifest["weights"] == "random"
    assert len(manifest["weight_hash"]) == 64
    assert int(manifest["weight_hash"], 16) >= 0  # hex digest
    assert manifest["errors"] == []
    assert manifest["files"] == [
        "widget/train_0000.vftr",
        "widget/train_0001.vftr",
        "widget/test_0000.vftr",
        "widget/test_0001.vftr",
    ]


def test_layer_shapes_form_a_halving_grid_hierarchy(exported):
    _, manifest = exported
    shapes = manifest["layer_shapes"]
    assert list(shapes) == ["1", "2", "3"]
    sides = [shapes[k][1] for k in ("1", "2", "3")]
    assert sides == [28, 14, 7]  # each level halves the grid at 224 input
    assert all(shapes[k][1] == shapes[k][2] for k in shapes)


def test_exported_files_read_back_with_expected_metadata(exported):
    out, manifest = exported
    stack, mask_ref = read_feature_file(out / "widget/test_0001.vftr")
    assert stack.image_id == "widget/test/scratch/000"
    assert stack.label == "anomalous"
    assert stack.category == "widget"
    got_shapes = [(t.channels, t.height, t.width) for t in stack.layers]
    assert got_shapes == [tuple(v) for v in manifest["layer_shapes"].values()]
    assert mask_ref == "widget/test_0001_mask.npy"

    mask = np.load(out / mask_ref)
    assert mask.shape == (224, 224)
    assert set(np.unique(mask)) <= {0, 1}  # nearest-neighbor keeps it binary
    assert mask.sum() > 0


@pytest.mark.acceptance(name="exporter-primary-validation")
def test_every_file_passes_primary_side_validation(exported):
    out, manifest = exported
    for rel in manifest["files"]:
        stack, mask_ref = read_feature_file(out / rel)
        # re-serializing proves the bytes are exactly the documented layout
        assert serialize_feature_stack(stack, mask_ref) == (out / rel).read_bytes()


def test_primary_loads_and_scores_the_export(exported):
    out, _ = exported
    dataset = load_feature_dataset(out)
    assert [c.name for c in dataset.categories] == ["widget"]
    assert dataset.map_h == dataset.map_w == 224

    config = RunConfig(
        feature_source="features_dir",
        dataset_root=str(out),
        scenario_names=("raw_features",),
        coreset_ratio=0.5,
    )
    suite = run_suite(config)
    assert suite.failures == ()
    (result,) = suite.results
    assert result.per_category[0].category == "widget"
    assert result.mean_payload_bytes > 0


# ---------------------------------------------------------------------------
# Determinism


@pytest.mark.acceptance(name="exporter-deterministic-reexport")
def test_re_export_is_byte_identical(image_tree, exported, tmp_path):
    out_a, manifest_a = exported
    manifest_b = export(
        image_tree, get_profile("mobilenet_v2"), tmp_path, weights="random", seed=0
    )
    assert manifest_b == manifest_a
    for rel in manifest_a["files"]:
        assert (tmp_path / rel).read_bytes() == (out_a / rel).read_bytes()
    assert (tmp_path / "index.json").read_text() == (out_a / "index.json").read_text()


def test_seed_changes_weights_and_features(image_tree, exported, tmp_path):
    out_a, manifest_a = exported
    manifest_b = export(
        image_tree, get_profile("mobilenet_v2"), tmp_path, weights="random", seed=1
    )
    assert manifest_b["weight_hash"] != manifest_a["weight_hash"]
    rel = manifest_a["files"][0]
    assert (tmp_path / rel).read_bytes() != (out_a / rel).read_bytes()


def test_weight_hash_is_stable_per_seed():
    profile = get_profile("mobilenet_v2")
    hash_a = weight_hash(load_backbone(profile, weights="random", seed=7))
    hash_b = weight_hash(load_backbone(profile, weights="random", seed=7))
    assert hash_a == hash_b


# ---------------------------------------------------------------------------
# Error handling


def test_corrupt_image_is_recorded_and_export_continues(tmp_path):
    root = tmp_path / "images"
    build_image_tree(root)
    (root / "widget/train/good/zzz.png").write_bytes(b"not a png at all")
    out = tmp_path / "out"
    manifest = export(
        root, get_profile("mobilenet_v2"), out, weights="random", seed=0
    )
    assert len(manifest["errors"]) == 1
    assert manifest["errors"][0]["image_id"] == "widget/train/good/zzz"
    assert len(manifest["files"]) == 4  # everything else still produced
    index = json.loads((out / "index.json").read_text())
    listed = [e["file"] for e in index["categories"]["widget"]["train"]]
    assert len(listed) == 2  # the corrupt entry is absent


def test_missing_weights_file(tmp_path):
    with pytest.raises(MissingWeightsError, match="not found"):
        load_backbone(
            get_profile("mobilenet_v2"), weights=str(tmp_path / "none.pt")
        )


def test_weights_from_state_dict_file(tmp_path):
    profile = get_profile("mobilenet_v2")
    model = load_backbone(profile, weights="random", seed=3)
    path = tmp_path / "weights.pt"
    torch.save(model.state_dict(), path)
    reloaded = load_backbone(profile, weights=str(path))
    assert weight_hash(reloaded) == weight_hash(model)


def test_unknown_tap_is_a_profile_error():
    profile = ExportProfile(
        name="broken", backbone="mobilenet_v2", taps=("features.99",)
    )
    model = load_backbone(profile, weights="random", seed=0)
    with pytest.raises(ProfileError, match="features.99"):
        FeatureExtractor(model, profile)


# ---------------------------------------------------------------------------
# The server-side profile


def test_wide_resnet_profile_shapes():
    profile = get_profile("wide_resnet_50")
    model = load_backbone(profile, weights="random", seed=0)
    features = FeatureExtractor(model, profile)(torch.zeros(1, 3, 224, 224))
    assert [f.shape for f in features] == [
        (256, 56, 56),
        (512, 28, 28),
        (1024, 14, 14),
    ]
    assert all(f.dtype == np.float32 for f in features)


# ---------------------------------------------------------------------------
# Raw image dumps


def test_export_images_layout(image_tree, tmp_path):
    manifest = export_images(image_tree, tmp_path, side=224)
    assert manifest["bytes_per_image"] == 224 * 224 * 3
    assert len(manifest["files"]) == 4
    for rel in manifest["files"]:
        assert len((tmp_path / rel).read_bytes()) == 224 * 224 * 3
    mask = np.load(tmp_path / "widget/test_0001_mask.npy")
    assert mask.shape == (224, 224)
    assert set(np.unique(mask)) <= {0, 1}


def test_export_images_deterministic(image_tree, tmp_path):
    export_images(image_tree, tmp_path / "a", side=64)
    export_images(image_tree, tmp_path / "b", side=64)
    rel = "widget/train_0000.rgb"
    assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
    assert len((tmp_path / "a" / rel).read_bytes()) == 64 * 64 * 3


def test_mask_resize_stays_binary(tmp_path):
    # a non-integer scale factor would break a bilinear resize's binariness
    mask = np.zeros((50, 50), dtype=np.uint8)
    mask[10:30, 5:45] = 255
    path = tmp_path / "mask.png"
    save_png(path, mask)
    resized = load_mask(path, 224)
    assert set(np.unique(resized)) == {0, 1}
