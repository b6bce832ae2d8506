"""Dataset ingestion, the binary feature interchange format, and a
deterministic synthetic dataset generator for desk-scale testing.

Feature files ("VFTR") carry one image's layer stack as little-endian
f32 planes plus identity/label metadata; an index.json sidecar lists the
files per split so a directory of them acts as a dataset.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .binio import FormatError, Reader, Writer
from .model import LABEL_ANOMALOUS, LABEL_NORMAL, FeatureStack, FeatureTensor

log = logging.getLogger(__name__)

FEATURE_MAGIC = b"VFTR"
FEATURE_VERSION = 1

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}

INDEX_FILENAME = "index.json"


class DatasetLayoutError(ValueError):
    """The directory tree does not follow the expected dataset layout."""


# ---------------------------------------------------------------------------
# MVTec-style directory scanning


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: str
    label: str
    category: str
    mask_path: Optional[str] = None


@dataclass(frozen=True)
class CategoryIndex:
    category: str
    train: tuple  # normal-only ImageEntry list
    test: tuple

    def __post_init__(self):
        for e in self.train:
            if e.label != LABEL_NORMAL:
                raise DatasetLayoutError(
                    f"{self.category}: train split contains non-normal entry {e.image_id}"
                )
        for e in self.test:
            if e.label == LABEL_ANOMALOUS and not e.mask_path:
                raise DatasetLayoutError(
                    f"{self.category}: anomalous test entry {e.image_id} has no mask"
                )
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))


@dataclass(frozen=True)
class DatasetIndex:
    categories: tuple

    def category(self, name: str) -> CategoryIndex:
        for c in self.categories:
            if c.category == name:
                return c
        raise KeyError(f"no category {name!r} in dataset")


def _image_files(directory: Path) -> list:
    files = []
    for p in sorted(directory.iterdir()):
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS:
            files.append(p)
        elif p.is_file():
            log.warning("ignoring non-image file %s", p)
    return files


def scan_dataset(root) -> DatasetIndex:
    """Index a `<category>/{train,test,ground_truth}/<defect>` image tree.

    Train may only contain `good`; anomalous test images must have a
    counterpart under ground_truth. File order never affects the result
    (everything is sorted by name).
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"dataset root {root} does not exist")
    categories = []
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        category = cat_dir.name
        train_dir = cat_dir / "train"
        test_dir = cat_dir / "test"
        if not train_dir.is_dir():
            raise DatasetLayoutError(f"{category}: missing train split")
        bad = [p.name for p in sorted(train_dir.iterdir()) if p.is_dir() and p.name != "good"]
        if bad:
            raise DatasetLayoutError(
                f"{category}: train split contains defect directories {bad}"
            )
        good_dir = train_dir / "good"
        if not good_dir.is_dir():
            raise DatasetLayoutError(f"{category}: missing train/good directory")
        train = tuple(
            ImageEntry(
                image_id=f"{category}/train/good/{p.stem}",
                path=str(p),
                label=LABEL_NORMAL,
                category=category,
            )
            for p in _image_files(good_dir)
        )
        test = []
        if test_dir.is_dir():
            for defect_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
                defect = defect_dir.name
                label = LABEL_NORMAL if defect == "good" else LABEL_ANOMALOUS
                for p in _image_files(defect_dir):
                    mask_path = None
                    if label == LABEL_ANOMALOUS:
                        candidate = (
                            cat_dir / "ground_truth" / defect / f"{p.stem}_mask.png"
                        )
                        if not candidate.is_file():
                            raise DatasetLayoutError(
                                f"{category}: no ground-truth mask for {p.name}"
                            )
                        mask_path = str(candidate)
                    test.append(
                        ImageEntry(
                            image_id=f"{category}/test/{defect}/{p.stem}",
                            path=str(p),
                            label=label,
                            category=category,
                            mask_path=mask_path,
                        )
                    )
        categories.append(CategoryIndex(category=category, train=train, test=tuple(test)))
    if not categories:
        raise DatasetLayoutError(f"no categories found under {root}")
    return DatasetIndex(categories=tuple(categories))


# ---------------------------------------------------------------------------
# Feature file format


def serialize_feature_stack(stack: FeatureStack, mask_ref: str = "") -> bytes:
    w = Writer()
    w.raw(FEATURE_MAGIC)
    w.u8(FEATURE_VERSION)
    w.utf8_u16(stack.image_id)
    w.utf8_u16(stack.category)
    w.u8(0 if stack.label == LABEL_NORMAL else 1)
    w.u8(len(stack.layers))
    for t in stack.layers:
        w.u8(t.layer_index)
        w.u16(t.channels)
        w.u16(t.height)
        w.u16(t.width)
    w.utf8_u16(mask_ref)
    for t in stack.layers:
        w.raw(t.values.astype("<f4").tobytes())
    return w.getvalue()


def parse_feature_stack(data: bytes) -> tuple:
    """Decode a VFTR blob → (FeatureStack without mask, mask_ref string)."""
    r = Reader(data)
    r.expect_magic(FEATURE_MAGIC)
    r.expect_version(FEATURE_VERSION)
    image_id = r.utf8_u16()
    category = r.utf8_u16()
    label_byte = r.u8()
    if label_byte not in (0, 1):
        raise FormatError(f"invalid label byte {label_byte}")
    label = LABEL_NORMAL if label_byte == 0 else LABEL_ANOMALOUS
    shapes = [(r.u8(), r.u16(), r.u16(), r.u16()) for _ in range(r.u8())]
    mask_ref = r.utf8_u16()
    layers = []
    for layer_index, c, h, w in shapes:
        vals = np.frombuffer(r.take(4 * c * h * w), dtype="<f4")
        layers.append(FeatureTensor(c, h, w, vals, layer_index))
    r.expect_end()
    stack = FeatureStack(
        image_id=image_id, layers=tuple(layers), label=label, category=category
    )
    return stack, mask_ref


def write_feature_file(stack: FeatureStack, path, mask_ref: str = "") -> None:
    Path(path).write_bytes(serialize_feature_stack(stack, mask_ref))


def read_feature_file(path) -> tuple:
    return parse_feature_stack(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Synthetic dataset generation


@dataclass(frozen=True)
class SyntheticCategory:
    name: str
    train: tuple  # FeatureStack, all normal
    test: tuple


@dataclass(frozen=True)
class SyntheticDataset:
    categories: tuple
    map_h: int
    map_w: int

    def category(self, name: str) -> SyntheticCategory:
        for c in self.categories:
            if c.name == name:
                return c
        raise KeyError(f"no category {name!r}")


def _blocky_field(rng, shape, block: int, std: float) -> np.ndarray:
    """Random field constant on block×block cells (nearest-neighbor upsampled)."""
    d, h, w = shape
    coarse = rng.normal(0.0, std, (d, h // block, w // block))
    return np.repeat(np.repeat(coarse, block, axis=1), block, axis=2)


def generate_synthetic(
    categories,
    n_train: int,
    n_test: int,
    anomaly_fraction: float,
    seed: int,
    *,
    n_layers: int = 3,
    channels_per_layer: int = 10,
    grid: int = 16,
    base_block: int = 4,
    noise_block: int = 4,
    base_std: float = 6.0,
    noise_std: float = 1.0,
    delta: float = 6.0,
    region_min: int = 4,
    region_max: int = 8,
    map_scale: int = 4,
) -> SyntheticDataset:
    """Deterministic stand-in for CNN features at desk scale.

    Each category gets a fixed blocky mean field; every image adds its own
    block-correlated noise (std = noise_std). Anomalous test images shift a
    contiguous rectangle of grid cells by delta·noise_std per channel with
    a per-image random sign pattern, and the pixel mask marks that
    rectangle at map resolution (grid·map_scale per side).
    """
    if isinstance(categories, int):
        categories = [f"cat{str(i).zfill(2)}" for i in range(categories)]
    categories = list(categories)
    if not categories:
        raise ValueError("need at least one category")
    if n_train < 1:
        raise ValueError("n_train must be at least 1")
    if not 0.0 <= anomaly_fraction <= 1.0:
        raise ValueError("anomaly_fraction must be in [0, 1]")
    if grid % base_block != 0 or grid % noise_block != 0:
        raise ValueError("block sizes must divide the grid side")
    if not 1 <= region_min <= region_max <= grid:
        raise ValueError("need 1 <= region_min <= region_max <= grid")
    d = n_layers * channels_per_layer
    n_anom = round(anomaly_fraction * n_test)
    out = []
    for ci, name in enumerate(categories):
        base_rng = np.random.default_rng((seed, ci, 0))
        base = _blocky_field(base_rng, (d, grid, grid), base_block, base_std)

        def make_stack(image_id: str, rng, anomalous: bool) -> FeatureStack:
            values = base + _blocky_field(rng, (d, grid, grid), noise_block, noise_std)
            mask = None
            if anomalous:
                rh = int(rng.integers(region_min, region_max + 1))
                rw = int(rng.integers(region_min, region_max + 1))
                r0 = int(rng.integers(0, grid - rh + 1))
                c0 = int(rng.integers(0, grid - rw + 1))
                signs = rng.choice([-1.0, 1.0], size=d)
                values[:, r0 : r0 + rh, c0 : c0 + rw] += (
                    signs[:, None, None] * delta * noise_std
                )
                mask = np.zeros((grid * map_scale, grid * map_scale), dtype=np.uint8)
                mask[
                    r0 * map_scale : (r0 + rh) * map_scale,
                    c0 * map_scale : (c0 + rw) * map_scale,
                ] = 1
            layers = tuple(
                FeatureTensor.from_array(
                    values[li * channels_per_layer : (li + 1) * channels_per_layer],
                    layer_index=li + 1,
                )
                for li in range(n_layers)
            )
            return FeatureStack(
                image_id=image_id,
                layers=layers,
                label=LABEL_ANOMALOUS if anomalous else LABEL_NORMAL,
                category=name,
                mask=mask,
            )

        train = tuple(
            make_stack(
                f"{name}/train/good/{str(i).zfill(3)}",
                np.random.default_rng((seed, ci, 1, i)),
                anomalous=False,
            )
            for i in range(n_train)
        )
        test = tuple(
            make_stack(
                f"{name}/test/{'defect' if i < n_anom else 'good'}/{str(i).zfill(3)}",
                np.random.default_rng((seed, ci, 2, i)),
                anomalous=i < n_anom,
            )
            for i in range(n_test)
        )
        out.append(SyntheticCategory(name=name, train=train, test=test))
    return SyntheticDataset(
        categories=tuple(out), map_h=grid * map_scale, map_w=grid * map_scale
    )


# ---------------------------------------------------------------------------
# Feature datasets on disk (synthetic dumps and exporter output)


def write_feature_dataset(dataset: SyntheticDataset, out_dir) -> None:
    """One VFTR file per image, masks as .npy, plus an index.json sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"map_h": dataset.map_h, "map_w": dataset.map_w, "categories": {}}
    for cat in dataset.categories:
        cat_dir = out_dir / cat.name
        cat_dir.mkdir(parents=True, exist_ok=True)
        entry = {"train": [], "test": []}
        for split, stacks in (("train", cat.train), ("test", cat.test)):
            for i, stack in enumerate(stacks):
                stem = f"{split}_{str(i).zfill(4)}"
                mask_ref = ""
                if stack.mask is not None:
                    mask_ref = f"{cat.name}/{stem}_mask.npy"
                    np.save(out_dir / mask_ref, np.asarray(stack.mask, dtype=np.uint8))
                rel = f"{cat.name}/{stem}.vftr"
                write_feature_file(stack, out_dir / rel, mask_ref)
                entry[split].append(
                    {"file": rel, "label": stack.label, "mask": mask_ref}
                )
        index["categories"][cat.name] = entry
    (out_dir / INDEX_FILENAME).write_text(json.dumps(index, indent=2, sort_keys=True))


def load_feature_dataset(root) -> SyntheticDataset:
    """Read back a feature dataset directory written by this module (or the
    exporter): VFTR files + index.json, masks re-attached from .npy files."""
    root = Path(root)
    index_path = root / INDEX_FILENAME
    if not index_path.is_file():
        raise DatasetLayoutError(f"no {INDEX_FILENAME} under {root}")
    index = json.loads(index_path.read_text())
    categories = []
    for name in sorted(index["categories"]):
        entry = index["categories"][name]
        splits = {}
        for split in ("train", "test"):
            stacks = []
            for item in entry[split]:
                stack, mask_ref = read_feature_file(root / item["file"])
                if stack.label != item["label"]:
                    raise FormatError(
                        f"{item['file']}: index label {item['label']!r} does not "
                        f"match file label {stack.label!r}"
                    )
                if mask_ref:
                    mask = np.load(root / mask_ref)
                    stack = FeatureStack(
                        image_id=stack.image_id,
                        layers=stack.layers,
                        label=stack.label,
                        category=stack.category,
                        mask=mask,
                    )
                stacks.append(stack)
            splits[split] = tuple(stacks)
        categories.append(
            SyntheticCategory(name=name, train=splits["train"], test=splits["test"])
        )
    return SyntheticDataset(
        categories=tuple(categories),
        map_h=int(index.get("map_h", 64)),
        map_w=int(index.get("map_w", 64)),
    )
