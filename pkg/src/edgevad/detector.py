"""Server-side anomaly detection over a memory bank of normal patches.

The bank stores a greedy k-center (farthest-point) coreset of normal patch
features. Test patches are scored by exact Euclidean distance to the
nearest bank entry; the score grid becomes a per-pixel anomaly map via
bilinear upsampling, Gaussian smoothing and min-max normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates
from scipy.spatial.distance import cdist

from .binio import Reader, Writer
from .codecs import SampledPatchSet
from .model import PatchGrid

BANK_MAGIC = b"VBNK"
BANK_VERSION = 1


@dataclass(frozen=True)
class MemoryBank:
    """Coreset of normal patch features used for nearest-neighbor scoring."""

    entries: np.ndarray  # (M, d) float32
    d: int
    coreset_ratio: float
    source_count: int
    seed: int

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float32)
        if entries.ndim != 2 or entries.shape[1] != self.d:
            raise ValueError(f"entries must be (M, {self.d}), got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("bank entries must be finite")
        if not 0.0 < self.coreset_ratio <= 1.0:
            raise ValueError(f"coreset_ratio must be in (0, 1], got {self.coreset_ratio}")
        expected = max(1, math.ceil(self.coreset_ratio * self.source_count))
        if entries.shape[0] != expected:
            raise ValueError(
                f"bank has {entries.shape[0]} rows, expected "
                f"max(1, ceil({self.coreset_ratio}*{self.source_count})) = {expected}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def M(self) -> int:
        return self.entries.shape[0]

    def serialize(self) -> bytes:
        """VBNK layout; carries only the rows, d and seed (no provenance)."""
        w = Writer()
        w.raw(BANK_MAGIC)
        w.u8(BANK_VERSION)
        w.u32(self.M)
        w.u32(self.d)
        w.u64(self.seed)
        w.raw(self.entries.astype("<f4").tobytes())
        return w.getvalue()


def read_memory_bank(data: bytes) -> MemoryBank:
    """Parse a VBNK blob; a loaded bank counts itself as its own source."""
    r = Reader(data)
    r.expect_magic(BANK_MAGIC)
    r.expect_version(BANK_VERSION)
    m, d, seed = r.u32(), r.u32(), r.u64()
    rows = np.frombuffer(r.take(4 * m * d), dtype="<f4").reshape(m, d)
    r.expect_end()
    return MemoryBank(entries=rows, d=d, coreset_ratio=1.0, source_count=m, seed=seed)


@dataclass(frozen=True)
class AnomalyResult:
    """Scores for one image: scalar, per-patch grid, per-pixel map."""

    image_score: float
    patch_scores: np.ndarray  # (rows, cols)
    anomaly_map: np.ndarray  # (out_h, out_w) in [0, 1]
    image_id: str

    def __post_init__(self):
        ps = np.asarray(self.patch_scores, dtype=np.float64)
        am = np.asarray(self.anomaly_map, dtype=np.float64)
        if not math.isclose(self.image_score, float(ps.max()), rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError("image_score must equal the max patch score")
        if am.min() < 0.0 or am.max() > 1.0:
            raise ValueError("anomaly map values must lie in [0, 1]")
        object.__setattr__(self, "patch_scores", ps)
        object.__setattr__(self, "anomaly_map", am)


# ---------------------------------------------------------------------------
# Coreset selection and bank construction


def coreset_select(features, ratio: float, seed: int) -> list:
    """Greedy farthest-point (k-center) subset of exactly ⌈ratio·n⌉ indices.

    The first index comes from the seeded generator; each following pick
    maximizes the min-distance to the already-selected set (ties take the
    lowest index). Deterministic per seed.
    """
    data = np.asarray(features, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("features must be a non-empty (n, d) array")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    n = data.shape[0]
    k = math.ceil(ratio * n)
    if k >= n:
        return list(range(n))
    rng = np.random.default_rng(seed)
    first = int(rng.integers(n))
    selected = [first]
    min_d2 = np.sum((data - data[first]) ** 2, axis=1)
    for _ in range(k - 1):
        nxt = int(np.argmax(min_d2))
        selected.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((data - data[nxt]) ** 2, axis=1))
    return selected


def build_memory_bank(normal_grids, ratio: float, seed: int) -> MemoryBank:
    """Pool all patches from the normal grids and keep a k-center coreset."""
    grids = list(normal_grids)
    if not grids:
        raise ValueError("no grids to build a bank from")
    d = grids[0].d
    for g in grids:
        if g.d != d:
            raise ValueError(f"inconsistent patch dimensionality: {g.d} != {d}")
    pooled = np.concatenate([g.to_matrix() for g in grids], axis=0)
    idx = coreset_select(pooled, ratio, seed)
    return MemoryBank(
        entries=pooled[idx].astype(np.float32),
        d=d,
        coreset_ratio=ratio,
        source_count=pooled.shape[0],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Scoring


def _nn_distances(vectors: np.ndarray, bank: MemoryBank) -> np.ndarray:
    dists = cdist(
        vectors.astype(np.float64), bank.entries.astype(np.float64), "euclidean"
    )
    return dists.min(axis=1)


def score_patches(bank: MemoryBank, inp) -> np.ndarray:
    """Exact nearest-bank-entry distance per grid cell, as a (rows, cols) array.

    For a sampled subset, unsampled cells take the score of the nearest
    sampled cell (grid-coordinate distance; ties resolved toward the first
    sampled cell in row-major order).
    """
    if isinstance(inp, PatchGrid):
        if inp.d != bank.d:
            raise ValueError(f"patch d={inp.d} does not match bank d={bank.d}")
        if not inp.is_full:
            raise ValueError("grid is sparse; score a SampledPatchSet instead")
        scores = _nn_distances(inp.to_matrix(), bank)
        return scores.reshape(inp.rows, inp.cols)
    if isinstance(inp, SampledPatchSet):
        if inp.d != bank.d:
            raise ValueError(f"patch d={inp.d} does not match bank d={bank.d}")
        order = sorted(
            range(len(inp.patches)),
            key=lambda i: (inp.patches[i].grid_row, inp.patches[i].grid_col),
        )
        patches = [inp.patches[i] for i in order]
        sampled_scores = _nn_distances(np.stack([p.vector for p in patches]), bank)
        sampled_coords = np.array(
            [(p.grid_row, p.grid_col) for p in patches], dtype=np.float64
        )
        rows, cols = inp.source_rows, inp.source_cols
        rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        cells = np.stack([rr.reshape(-1), cc.reshape(-1)], axis=1).astype(np.float64)
        nearest = np.argmin(cdist(cells, sampled_coords, "euclidean"), axis=1)
        return sampled_scores[nearest].reshape(rows, cols)
    raise TypeError(f"cannot score {type(inp).__name__}")


def make_anomaly_map(
    patch_scores, rows: int, cols: int, out_h: int, out_w: int, sigma: float
) -> np.ndarray:
    """Patch-score grid → per-pixel map in [0, 1].

    Bilinear upsampling (corner-aligned), Gaussian smoothing truncated at
    4σ (skipped for σ=0), then min-max normalization; a constant map
    normalizes to all zeros.
    """
    grid = np.asarray(patch_scores, dtype=np.float64).reshape(rows, cols)
    if out_h < rows or out_w < cols:
        raise ValueError("output dims must be at least the grid dims")
    ri = np.linspace(0.0, rows - 1.0, out_h) if out_h > 1 else np.zeros(1)
    ci = np.linspace(0.0, cols - 1.0, out_w) if out_w > 1 else np.zeros(1)
    rr, cc = np.meshgrid(ri, ci, indexing="ij")
    upsampled = map_coordinates(grid, [rr, cc], order=1, mode="nearest")
    if sigma > 0:
        upsampled = gaussian_filter(upsampled, sigma=sigma, truncate=4.0)
    lo, hi = upsampled.min(), upsampled.max()
    if hi > lo:
        return (upsampled - lo) / (hi - lo)
    return np.zeros((out_h, out_w), dtype=np.float64)


def detect(
    bank: MemoryBank,
    inp,
    out_h: int,
    out_w: int,
    sigma: float = 4.0,
    image_id: str = "",
) -> AnomalyResult:
    """Score an image end to end; the scalar score is the max patch distance.

    Batch-level normalization of image scores to [0, 1] happens in the
    pipeline over the whole evaluated set, not here.
    """
    if isinstance(inp, PatchGrid):
        rows, cols = inp.rows, inp.cols
    elif isinstance(inp, SampledPatchSet):
        rows, cols = inp.source_rows, inp.source_cols
    else:
        raise TypeError(f"cannot detect on {type(inp).__name__}")
    scores = score_patches(bank, inp)
    amap = make_anomaly_map(scores, rows, cols, out_h, out_w, sigma)
    return AnomalyResult(
        image_score=float(scores.max()),
        patch_scores=scores,
        anomaly_map=amap,
        image_id=image_id,
    )
