"""Segmentation quality metrics: overlap (Dice) and surface distance (ASSD)."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .volume import LabelMask


class UndefinedMetricError(Exception):
    """Surface distance is undefined when either mask is empty."""


def dice(pred: LabelMask, gt: LabelMask) -> float:
    """2|A n B| / (|A| + |B|); two empty masks count as a perfect match."""
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    a = pred.values.astype(bool)
    b = gt.values.astype(bool)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


def surface_voxels(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a 6-connected background neighbor.

    The volume boundary counts as background, so any non-empty mask has a
    non-empty surface.
    """
    m = np.asarray(mask, dtype=bool)
    interior = np.ones_like(m)
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(1, None)
        hi[ax] = slice(0, -1)
        shifted = np.zeros_like(m)
        shifted[tuple(hi)] = m[tuple(lo)]   # neighbor at +1 along ax
        interior &= shifted
        shifted = np.zeros_like(m)
        shifted[tuple(lo)] = m[tuple(hi)]   # neighbor at -1 along ax
        interior &= shifted
    return m & ~interior


def assd(pred: LabelMask, gt: LabelMask, spacing=(1.0, 1.0, 1.0)) -> float:
    """Average symmetric distance between the two mask surfaces.

    Every surface voxel contributes its shortest Euclidean distance to the
    other surface (computed by an exact distance transform, scaled by voxel
    spacing); the result averages both directions. Raises UndefinedMetricError
    when either mask is empty, rather than inventing a number.
    """
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    if pred.values.sum() == 0 or gt.values.sum() == 0:
        raise UndefinedMetricError("both masks must be non-empty")
    sp = surface_voxels(pred.values)
    sg = surface_voxels(gt.values)
    dist_to_gt = ndimage.distance_transform_edt(~sg, sampling=spacing)
    dist_to_pred = ndimage.distance_transform_edt(~sp, sampling=spacing)
    total = dist_to_gt[sp].sum() + dist_to_pred[sg].sum()
    return float(total / (int(sp.sum()) + int(sg.sum())))


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation of a per-sample metric list."""
    arr = np.asarray([v for v in values if v is not None], dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std())
