"""Domain types for images, feature tensors and the patch-grid embedding.

Feature values are carried as 32-bit floats end to end, in channel-major
(C, H, W) flattening order, so the edge and server sides agree bit-exactly
on every serialized tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"
LABELS = (LABEL_NORMAL, LABEL_ANOMALOUS)


class AlignmentError(ValueError):
    """Layer resolutions cannot be aligned by integer replication."""


def _frozen_f32(values) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32).reshape(-1))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ImageSample:
    """One dataset image with its label and optional ground-truth mask."""

    id: str
    pixels: np.ndarray  # (H, W, 3) uint8
    label: str
    category: str
    mask: Optional[np.ndarray] = None  # (H, W), nonzero marks anomalous pixels

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be HxWx3, got shape {px.shape}")
        object.__setattr__(self, "pixels", px)
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.mask is not None:
            mask = np.asarray(self.mask)
            if mask.shape != px.shape[:2]:
                raise ValueError(
                    f"mask shape {mask.shape} does not match pixel dims {px.shape[:2]}"
                )
            if self.label == LABEL_NORMAL and np.any(mask):
                raise ValueError("normal sample must not carry a nonzero mask")
            object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class FeatureTensor:
    """One layer's activation tensor, stored flat in (C, H, W) order."""

    channels: int
    height: int
    width: int
    values: np.ndarray
    layer_index: int

    def __post_init__(self):
        if self.channels <= 0 or self.height <= 0 or self.width <= 0:
            raise ValueError("tensor dims must be positive")
        if self.layer_index <= 0:
            raise ValueError("layer_index must be positive")
        values = _frozen_f32(self.values)
        if values.size != self.channels * self.height * self.width:
            raise ValueError(
                f"values length {values.size} != C*H*W = "
                f"{self.channels * self.height * self.width}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("tensor values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_array(cls, arr, layer_index: int) -> "FeatureTensor":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"expected (C, H, W) array, got shape {arr.shape}")
        c, h, w = arr.shape
        return cls(c, h, w, arr.reshape(-1), layer_index)

    def as_array(self) -> np.ndarray:
        """Read-only (C, H, W) view of the values."""
        return self.values.reshape(self.channels, self.height, self.width)


@dataclass(frozen=True)
class FeatureStack:
    """All extracted layers for one image, plus the sample metadata."""

    image_id: str
    layers: tuple
    label: str
    category: str
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("feature stack must contain at least one layer")
        indices = [t.layer_index for t in layers]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError(f"layer indices must strictly increase, got {indices}")
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        object.__setattr__(self, "layers", layers)


@dataclass(frozen=True)
class PatchFeature:
    """Concatenated multi-layer feature vector at one grid location."""

    vector: np.ndarray
    grid_row: int
    grid_col: int

    def __post_init__(self):
        if self.grid_row < 0 or self.grid_col < 0:
            raise ValueError("grid coordinates must be non-negative")
        vec = _frozen_f32(self.vector)
        if not np.all(np.isfinite(vec)):
            raise ValueError("patch vector must be finite")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class PatchGrid:
    """Patch features laid out on a rows x cols grid (possibly sparse)."""

    patches: tuple
    rows: int
    cols: int
    d: int

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0 or self.d <= 0:
            raise ValueError("rows, cols and d must be positive")
        patches = tuple(self.patches)
        if len(patches) > self.rows * self.cols:
            raise ValueError("more patches than grid cells")
        seen = set()
        for p in patches:
            if p.vector.size != self.d:
                raise ValueError(
                    f"patch at ({p.grid_row},{p.grid_col}) has length "
                    f"{p.vector.size}, expected d={self.d}"
                )
            if p.grid_row >= self.rows or p.grid_col >= self.cols:
                raise ValueError(
                    f"patch coordinate ({p.grid_row},{p.grid_col}) outside "
                    f"{self.rows}x{self.cols} grid"
                )
            key = (p.grid_row, p.grid_col)
            if key in seen:
                raise ValueError(f"duplicate patch coordinate {key}")
            seen.add(key)
        patches = tuple(sorted(patches, key=lambda p: (p.grid_row, p.grid_col)))
        object.__setattr__(self, "patches", patches)

    @property
    def is_full(self) -> bool:
        return len(self.patches) == self.rows * self.cols

    def to_matrix(self) -> np.ndarray:
        """(n, d) float32 matrix of patch vectors in row-major grid order."""
        return np.stack([p.vector for p in self.patches])

    def coords(self) -> np.ndarray:
        """(n, 2) int array of (row, col) coordinates, row-major order."""
        return np.array([(p.grid_row, p.grid_col) for p in self.patches], dtype=np.int64)


def build_patch_grid(stack: FeatureStack) -> PatchGrid:
    """Concatenate per-location channel vectors from all layers into a grid.

    The grid has the spatial resolution of the first (shallowest, largest)
    layer; coarser layers are nearest-neighbor replicated up to it, which
    requires their dims to divide the target dims. The patch dimensionality
    is the sum of all layer channel counts.
    """
    target = stack.layers[0]
    rows, cols = target.height, target.width
    upsampled = []
    for tensor in stack.layers:
        if rows % tensor.height != 0 or cols % tensor.width != 0:
            raise AlignmentError(
                f"layer {tensor.layer_index} is {tensor.height}x{tensor.width}; "
                f"not an integer divisor of the {rows}x{cols} target grid"
            )
        fr = rows // tensor.height
        fc = cols // tensor.width
        arr = tensor.as_array()
        if fr > 1:
            arr = np.repeat(arr, fr, axis=1)
        if fc > 1:
            arr = np.repeat(arr, fc, axis=2)
        upsampled.append(arr)
    full = np.concatenate(upsampled, axis=0)  # (d, rows, cols)
    d = full.shape[0]
    patches = tuple(
        PatchFeature(vector=full[:, r, c].copy(), grid_row=r, grid_col=c)
        for r in range(rows)
        for c in range(cols)
    )
    return PatchGrid(patches=patches, rows=rows, cols=cols, d=d)


def flatten_embedding(stack: FeatureStack) -> np.ndarray:
    """Whole-image embedding: per-layer channel-major flattenings, concatenated."""
    return np.concatenate([t.values for t in stack.layers])
