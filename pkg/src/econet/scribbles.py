"""Scribble bookkeeping, class balancing weights and patch extraction."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .volume import Volume3D


class InsufficientScribblesError(Exception):
    """Both a foreground and a background scribble are required."""


Coord = tuple[int, int, int]


class ScribbleSet:
    """Foreground/background voxel coordinate sets with annotation order.

    The two classes are kept disjoint; on conflicting labels the most recent
    one wins (an annotator must be able to overrule earlier strokes).
    Iteration order is insertion order, which keeps downstream patch batches
    and training runs reproducible.
    """

    def __init__(self, foreground=(), background=()):
        self._fg: dict[Coord, None] = {}
        self._bg: dict[Coord, None] = {}
        for c in foreground:
            self.add(c, 1)
        for c in background:
            self.add(c, 0)

    def add(self, coord, label: int) -> None:
        coord = (int(coord[0]), int(coord[1]), int(coord[2]))
        if label == 1:
            self._bg.pop(coord, None)
            self._fg[coord] = None
        elif label == 0:
            self._fg.pop(coord, None)
            self._bg[coord] = None
        else:
            raise ValueError(f"label must be 0 or 1, got {label}")

    @property
    def foreground(self) -> list[Coord]:
        return list(self._fg)

    @property
    def background(self) -> list[Coord]:
        return list(self._bg)

    def num_foreground(self) -> int:
        return len(self._fg)

    def num_background(self) -> int:
        return len(self._bg)

    def __len__(self) -> int:
        return len(self._fg) + len(self._bg)

    def __contains__(self, coord) -> bool:
        coord = tuple(int(c) for c in coord)
        return coord in self._fg or coord in self._bg

    def copy(self) -> "ScribbleSet":
        out = ScribbleSet()
        out._fg = dict(self._fg)
        out._bg = dict(self._bg)
        return out

    def coords_and_labels(self) -> tuple[np.ndarray, np.ndarray]:
        """All scribbles as (N,3) int array plus (N,) labels, foreground first."""
        coords = list(self._fg) + list(self._bg)
        labels = np.concatenate([np.ones(len(self._fg), dtype=np.int64),
                                 np.zeros(len(self._bg), dtype=np.int64)])
        return np.asarray(coords, dtype=np.int64).reshape(-1, 3), labels

    def check_bounds(self, dims) -> list[Coord]:
        """Return the coordinates lying outside `dims` (empty when valid)."""
        bad = []
        for c in list(self._fg) + list(self._bg):
            if any(v < 0 or v >= d for v, d in zip(c, dims)):
                bad.append(c)
        return bad

    def to_json(self) -> dict:
        return {"foreground": [list(c) for c in self._fg],
                "background": [list(c) for c in self._bg]}

    @classmethod
    def from_json(cls, d: dict) -> "ScribbleSet":
        return cls(foreground=[tuple(c) for c in d.get("foreground", [])],
                   background=[tuple(c) for c in d.get("background", [])])

    def __eq__(self, other) -> bool:
        return (isinstance(other, ScribbleSet)
                and set(self._fg) == set(other._fg)
                and set(self._bg) == set(other._bg))


def class_weights(s: ScribbleSet) -> tuple[Fraction, Fraction]:
    """Balancing weights (|S|/|S_fg|, |S|/|S_bg|) for the training loss.

    Returned as exact rationals so w_f*|S_fg| == w_b*|S_bg| == |S| holds
    identically; cast to float where they enter the loss.
    """
    nf, nb = s.num_foreground(), s.num_background()
    if nf < 1 or nb < 1:
        raise InsufficientScribblesError(
            f"need scribbles of both classes to balance, got fg={nf} bg={nb}")
    total = nf + nb
    return Fraction(total, nf), Fraction(total, nb)


def merge_scribbles(existing: ScribbleSet, new: ScribbleSet) -> ScribbleSet:
    """Union per class; on conflict the new label wins. Inputs are not mutated."""
    out = existing.copy()
    for c in new.foreground:
        out.add(c, 1)
    for c in new.background:
        out.add(c, 0)
    return out


@dataclass
class PatchBatch:
    patches: np.ndarray  # (N, K, K, K) float32
    labels: np.ndarray   # (N,) int64 in {0, 1}
    centers: np.ndarray  # (N, 3) int64, the scribbled voxel of each patch
    K: int


def extract_patches(v: Volume3D, s: ScribbleSet, K: int) -> PatchBatch:
    """Cut a K^3 intensity block around every scribbled voxel.

    Out-of-volume positions are filled by edge replication (coordinate
    clamping), the same rule the fully-convolutional inference pads with,
    so patch-wise and volume-wise passes see identical values everywhere.
    """
    if K < 3 or K % 2 == 0:
        raise ValueError(f"patch edge must be odd and >= 3, got {K}")
    if len(s) == 0:
        raise InsufficientScribblesError("no scribbles to extract patches from")
    coords, labels = s.coords_and_labels()
    patches = extract_patches_at(v, coords, K)
    return PatchBatch(patches=patches, labels=labels, centers=coords, K=K)


def extract_patches_at(v: Volume3D, coords: np.ndarray, K: int) -> np.ndarray:
    """Replication-padded K^3 patches centered at the given (N,3) coordinates."""
    r = K // 2
    off = np.arange(-r, r + 1)
    nx, ny, nz = v.dims
    xs = np.clip(coords[:, 0, None] + off, 0, nx - 1)
    ys = np.clip(coords[:, 1, None] + off, 0, ny - 1)
    zs = np.clip(coords[:, 2, None] + off, 0, nz - 1)
    return v.data[xs[:, :, None, None], ys[:, None, :, None], zs[:, None, None, :]]
