"""Evaluation metrics: image-level ROC AUC, pixel-level F1, deltas.

ROC AUC is the Mann-Whitney statistic (ties credited 0.5), computed from
average ranks in O(n log n). Pixel F1 pools all pixels of a category and
sweeps one global threshold over the unique map values, subsampled to at
most 1024 quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

# MVTec texture categories; everything else counts as an object category.
TEXTURE_CATEGORIES = frozenset({"carpet", "grid", "leather", "tile", "wood"})

F1_SWEEP_MAX_THRESHOLDS = 1024


def roc_auc(labels, scores) -> float:
    """Fraction of (positive, negative) pairs ranked correctly; ties 0.5."""
    y = np.asarray(labels).astype(bool).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.shape != s.shape:
        raise ValueError(f"labels ({y.size}) and scores ({s.size}) differ in length")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _f1_candidates(values: np.ndarray) -> np.ndarray:
    uniq = np.unique(values)
    if uniq.size <= F1_SWEEP_MAX_THRESHOLDS:
        return uniq
    qs = np.linspace(0.0, 1.0, F1_SWEEP_MAX_THRESHOLDS)
    return np.unique(np.quantile(uniq, qs, method="nearest"))


def pixel_f1_best(masks, maps) -> tuple:
    """Best pooled pixel F1 over one global threshold; returns (f1, threshold).

    A pixel is predicted anomalous when its map value is ≥ the threshold.
    """
    masks = list(masks)
    maps = list(maps)
    if len(masks) != len(maps) or not masks:
        raise ValueError("need equally many (non-zero) masks and maps")
    flat_y = []
    flat_s = []
    for mask, amap in zip(masks, maps):
        mask = np.asarray(mask)
        amap = np.asarray(amap, dtype=np.float64)
        if mask.shape != amap.shape:
            raise ValueError(
                f"mask shape {mask.shape} does not match map shape {amap.shape}"
            )
        flat_y.append(mask.astype(bool).reshape(-1))
        flat_s.append(amap.reshape(-1))
    y = np.concatenate(flat_y)
    s = np.concatenate(flat_s)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("pixel F1 needs at least one positive pixel")
    candidates = _f1_candidates(s)
    s_sorted = np.sort(s)
    pos_sorted = np.sort(s[y])
    # predicted-positive and true-positive counts at score >= threshold
    pred = s.size - np.searchsorted(s_sorted, candidates, side="left")
    tp = n_pos - np.searchsorted(pos_sorted, candidates, side="left")
    f1 = 2.0 * tp / (pred + n_pos)
    best = int(np.argmax(f1))
    return float(f1[best]), float(candidates[best])


def delta_percent(value: float, baseline: float) -> float:
    """Relative change in percent: 100·(value − baseline)/baseline."""
    if baseline == 0:
        raise ValueError("baseline must be non-zero")
    return 100.0 * (value - baseline) / baseline


@dataclass(frozen=True)
class CategoryMetrics:
    """One category's scores for one scenario."""

    category: str
    f1_pixel: float
    roc_image: float

    def __post_init__(self):
        if not 0.0 <= self.f1_pixel <= 1.0:
            raise ValueError(f"f1_pixel out of [0, 1]: {self.f1_pixel}")
        if not 0.0 <= self.roc_image <= 1.0:
            raise ValueError(f"roc_image out of [0, 1]: {self.roc_image}")


@dataclass(frozen=True)
class MetricReport:
    """Per-category rows plus unweighted object/texture/overall means."""

    rows: tuple
    f1_objects: Optional[float]
    f1_textures: Optional[float]
    f1_overall: float
    roc_objects: Optional[float]
    roc_textures: Optional[float]
    roc_overall: float

    @classmethod
    def from_rows(cls, rows) -> "MetricReport":
        rows = tuple(sorted(rows, key=lambda r: r.category))
        if not rows:
            raise ValueError("metric report needs at least one category")
        objects = [r for r in rows if r.category not in TEXTURE_CATEGORIES]
        textures = [r for r in rows if r.category in TEXTURE_CATEGORIES]

        def mean(values):
            return float(np.mean(values)) if values else None

        return cls(
            rows=rows,
            f1_objects=mean([r.f1_pixel for r in objects]),
            f1_textures=mean([r.f1_pixel for r in textures]),
            f1_overall=float(np.mean([r.f1_pixel for r in rows])),
            roc_objects=mean([r.roc_image for r in objects]),
            roc_textures=mean([r.roc_image for r in textures]),
            roc_overall=float(np.mean([r.roc_image for r in rows])),
        )
