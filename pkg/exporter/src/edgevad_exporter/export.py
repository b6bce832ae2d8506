"""Export CNN features and resized images into edgevad's on-disk formats.

``export`` walks an MVTec-style image tree, runs every image through a
backbone profile, and writes one feature file per image plus the
``index.json`` sidecar that ``edgevad.load_feature_dataset`` consumes,
and a ``manifest.json`` recording the backbone, taps, weight hash, and
observed layer shapes. ``export_images`` writes raw 224x224 RGB dumps
for the image-transmission scenarios.

Unreadable images never abort an export: each failure is recorded in the
manifest's ``errors`` list and the remaining files are still written.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from edgevad import FeatureStack, FeatureTensor, scan_dataset, write_feature_file

from .backbone import FeatureExtractor, load_backbone, weight_hash
from .profiles import ExportProfile

log = logging.getLogger(__name__)

INDEX_FILENAME = "index.json"
MANIFEST_FILENAME = "manifest.json"


def load_image_tensor(path, profile: ExportProfile) -> torch.Tensor:
    """Decode, resize to the profile's input side, normalize; (1,3,S,S)."""
    side = profile.input_side
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(profile.mean, dtype=np.float32)) / np.asarray(
        profile.std, dtype=np.float32
    )
    return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0)


def load_image_rgb(path, side: int) -> np.ndarray:
    """Decode and resize; (side, side, 3) uint8."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((side, side), Image.BILINEAR)
    return np.asarray(rgb, dtype=np.uint8)


def load_mask(path, side: int) -> np.ndarray:
    """Nearest-neighbor resize keeps the mask binary; (side, side) uint8 0/1."""
    with Image.open(path) as img:
        gray = img.convert("L").resize((side, side), Image.NEAREST)
    return (np.asarray(gray) > 0).astype(np.uint8)


def export(
    dataset_root,
    profile: ExportProfile,
    out_dir,
    *,
    weights: str = "pretrained",
    seed: int = 0,
) -> dict:
    """Write feature files + index + manifest; return the manifest."""
    torch.set_num_threads(1)  # keeps float reductions reproducible
    index = scan_dataset(dataset_root)
    model = load_backbone(profile, weights=weights, seed=seed)
    extractor = FeatureExtractor(model, profile)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "backbone": profile.backbone,
        "profile": profile.name,
        "taps": list(profile.taps),
        "input_side": profile.input_side,
        "weights": weights if weights in ("pretrained", "random") else "file",
        "weight_hash": weight_hash(model),
        "layer_shapes": {},
        "files": [],
        "errors": [],
    }
    dataset_index = {
        "map_h": profile.input_side,
        "map_w": profile.input_side,
        "categories": {},
    }

    for cat in index.categories:
        cat_dir = out / cat.category
        cat_dir.mkdir(parents=True, exist_ok=True)
        entry = {"train": [], "test": []}
        for split, items in (("train", cat.train), ("test", cat.test)):
            for i, item in enumerate(items):
                stem = f"{split}_{str(i).zfill(4)}"
                try:
                    arrays = extractor(load_image_tensor(item.path, profile))
                except Exception as exc:  # record and continue
                    log.warning("skipping %s: %s", item.image_id, exc)
                    manifest["errors"].append(
                        {"image_id": item.image_id, "error": str(exc)}
                    )
                    continue
                shapes = {
                    str(j + 1): list(a.shape) for j, a in enumerate(arrays)
                }
                if not manifest["layer_shapes"]:
                    manifest["layer_shapes"] = shapes
                elif manifest["layer_shapes"] != shapes:
                    raise ValueError(
                        f"{item.image_id}: layer shapes {shapes} differ from "
                        f"{manifest['layer_shapes']}"
                    )
                layers = tuple(
                    FeatureTensor.from_array(a, layer_index=j + 1)
                    for j, a in enumerate(arrays)
                )
                mask_ref = ""
                if item.mask_path:
                    mask_ref = f"{cat.category}/{stem}_mask.npy"
                    np.save(
                        out / mask_ref, load_mask(item.mask_path, profile.input_side)
                    )
                stack = FeatureStack(
                    image_id=item.image_id,
                    layers=layers,
                    label=item.label,
                    category=cat.category,
                )
                rel = f"{cat.category}/{stem}.vftr"
                write_feature_file(stack, out / rel, mask_ref)
                entry[split].append(
                    {"file": rel, "label": item.label, "mask": mask_ref}
                )
                manifest["files"].append(rel)
        dataset_index["categories"][cat.category] = entry

    (out / INDEX_FILENAME).write_text(
        json.dumps(dataset_index, indent=2, sort_keys=True)
    )
    (out / MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def export_images(dataset_root, out_dir, side: int = 224) -> dict:
    """Raw resized image dumps: ``<category>/<split>_NNNN.rgb`` holding
    exactly side*side*3 bytes (row-major RGB), masks as binary ``.npy``."""
    index = scan_dataset(dataset_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "input_side": side,
        "bytes_per_image": side * side * 3,
        "files": [],
        "errors": [],
    }
    for cat in index.categories:
        (out / cat.category).mkdir(parents=True, exist_ok=True)
        for split, items in (("train", cat.train), ("test", cat.test)):
            for i, item in enumerate(items):
                stem = f"{split}_{str(i).zfill(4)}"
                try:
                    rgb = load_image_rgb(item.path, side)
                except Exception as exc:
                    log.warning("skipping %s: %s", item.image_id, exc)
                    manifest["errors"].append(
                        {"image_id": item.image_id, "error": str(exc)}
                    )
                    continue
                rel = f"{cat.category}/{stem}.rgb"
                (out / rel).write_bytes(rgb.tobytes())
                if item.mask_path:
                    np.save(
                        out / f"{cat.category}/{stem}_mask.npy",
                        load_mask(item.mask_path, side),
                    )
                manifest["files"].append(rel)
    (out / MANIFEST_FILENAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest
