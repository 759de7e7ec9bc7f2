"""Fixed 3-D Haar-like box features over K^3 windows.

A feature is the mean intensity of one axis-aligned box, or the difference
of two box means, evaluated inside the window centered on a voxel. Volume-
wide evaluation uses a summed-area table so every box sum costs eight
lookups regardless of box size.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .volume import Volume3D

DEFAULT_BANK_SIZE = 64


@dataclass(frozen=True)
class Box:
    offset: tuple[int, int, int]   # window coordinates, 0 <= offset
    extent: tuple[int, int, int]   # >= 1 along every axis

    def volume(self) -> int:
        return int(np.prod(self.extent))


@dataclass(frozen=True)
class HaarDescriptor:
    box_a: Box
    box_b: Box | None = None  # None -> plain mean(A), else mean(A) - mean(B)


@dataclass(frozen=True)
class HaarBank:
    window: int
    descriptors: tuple[HaarDescriptor, ...]

    def __post_init__(self):
        for d in self.descriptors:
            for box in (d.box_a, d.box_b):
                if box is None:
                    continue
                for o, e in zip(box.offset, box.extent):
                    if o < 0 or e < 1 or o + e > self.window:
                        raise ValueError(
                            f"box {box} does not fit in a {self.window}^3 window")

    def __len__(self) -> int:
        return len(self.descriptors)

    def to_json(self) -> dict:
        def enc(b):
            return None if b is None else {"offset": list(b.offset), "extent": list(b.extent)}
        return {"window": self.window,
                "descriptors": [{"a": enc(d.box_a), "b": enc(d.box_b)}
                                for d in self.descriptors]}

    @classmethod
    def from_json(cls, d: dict) -> "HaarBank":
        def dec(b):
            return None if b is None else Box(tuple(b["offset"]), tuple(b["extent"]))
        return cls(window=int(d["window"]),
                   descriptors=tuple(HaarDescriptor(dec(x["a"]), dec(x["b"]))
                                     for x in d["descriptors"]))


def default_bank(window: int = 7, size: int = DEFAULT_BANK_SIZE, seed: int = 0) -> HaarBank:
    """The documented reproducible bank: structured features plus seeded
    random box pairs padding the bank out to `size`.

    Structured part (19 features for any odd window K):
      - whole-window mean
      - 8 overlapping octant means (halves split at the center plane)
      - 3 half-window differences, lower minus upper along each axis
      - 6 center-versus-column differences: center cube of edge c in {3, 5}
        minus the full-length axis column of cross-section c^2, per axis
      - center voxel intensity
    """
    K = window
    if K % 2 == 0 or K < 3:
        raise ValueError(f"window must be odd and >= 3, got {K}")
    h = K // 2 + 1  # half edge, halves overlap on the center plane
    c0 = K // 2
    desc: list[HaarDescriptor] = []
    desc.append(HaarDescriptor(Box((0, 0, 0), (K, K, K))))
    for ox in (0, K - h):
        for oy in (0, K - h):
            for oz in (0, K - h):
                desc.append(HaarDescriptor(Box((ox, oy, oz), (h, h, h))))
    for ax in range(3):
        lo_ext = [K, K, K]
        lo_ext[ax] = h
        hi_off = [0, 0, 0]
        hi_off[ax] = K - h
        desc.append(HaarDescriptor(Box((0, 0, 0), tuple(lo_ext)),
                                   Box(tuple(hi_off), tuple(lo_ext))))
    for c in (3, 5):
        if c > K:
            continue
        off = (K - c) // 2
        center = Box((off, off, off), (c, c, c))
        for ax in range(3):
            col_off = [off, off, off]
            col_ext = [c, c, c]
            col_off[ax] = 0
            col_ext[ax] = K
            desc.append(HaarDescriptor(center, Box(tuple(col_off), tuple(col_ext))))
    desc.append(HaarDescriptor(Box((c0, c0, c0), (1, 1, 1))))
    rng = np.random.default_rng(seed)
    while len(desc) < size:
        boxes = []
        for _ in range(2):
            ext = tuple(int(rng.integers(1, K + 1)) for _ in range(3))
            off = tuple(int(rng.integers(0, K - e + 1)) for e in ext)
            boxes.append(Box(off, ext))
        desc.append(HaarDescriptor(boxes[0], boxes[1]))
    return HaarBank(window=K, descriptors=tuple(desc[:size]))


def _box_mean_patch(patches: np.ndarray, box: Box) -> np.ndarray:
    ox, oy, oz = box.offset
    ex, ey, ez = box.extent
    region = patches[..., ox:ox + ex, oy:oy + ey, oz:oz + ez]
    return region.mean(axis=(-3, -2, -1))


def haar_features(patch: np.ndarray, bank: HaarBank) -> np.ndarray:
    """Feature vector(s) for one K^3 patch or a (N, K, K, K) batch."""
    patch = np.asarray(patch)
    if patch.shape[-3:] != (bank.window,) * 3:
        raise ValueError(
            f"patch edge {patch.shape[-3:]} does not match bank window {bank.window}")
    feats = []
    for d in bank.descriptors:
        f = _box_mean_patch(patch, d.box_a)
        if d.box_b is not None:
            f = f - _box_mean_patch(patch, d.box_b)
        feats.append(f)
    return np.stack(feats, axis=-1)


def integral_volume(data: np.ndarray) -> np.ndarray:
    """Summed-area table with a zero border plane, float64 for accumulation."""
    iv = np.zeros(tuple(s + 1 for s in data.shape), dtype=np.float64)
    iv[1:, 1:, 1:] = data
    iv.cumsum(axis=0, out=iv)
    iv.cumsum(axis=1, out=iv)
    iv.cumsum(axis=2, out=iv)
    return iv


def _box_sums_all_voxels(iv: np.ndarray, box: Box, dims, r: int) -> np.ndarray:
    """Box sums of a window-relative box, for every voxel center at once.

    `iv` is the integral volume of the volume padded by r on each side, so a
    voxel (x, y, z) has its window origin at padded coordinate (x, y, z).
    """
    nx, ny, nz = dims
    ox, oy, oz = box.offset
    ex, ey, ez = box.extent

    def corner(dx, dy, dz):
        return iv[ox + dx: ox + dx + nx,
                  oy + dy: oy + dy + ny,
                  oz + dz: oz + dz + nz]

    return (corner(ex, ey, ez) - corner(0, ey, ez) - corner(ex, 0, ez)
            - corner(ex, ey, 0) + corner(0, 0, ez) + corner(0, ey, 0)
            + corner(ex, 0, 0) - corner(0, 0, 0))


def haar_feature_volume(v: Volume3D, bank: HaarBank, dtype=np.float32) -> np.ndarray:
    """(nx, ny, nz, len(bank)) features of the replication-padded window
    around every voxel; equals `haar_features` applied voxel-wise.

    Sums run over a float64 integral volume; `dtype` only controls storage.
    """
    r = bank.window // 2
    padded = np.pad(v.data.astype(np.float64), r, mode="edge")
    iv = integral_volume(padded)
    out = np.empty(v.dims + (len(bank),), dtype=dtype)
    for i, d in enumerate(bank.descriptors):
        f = _box_sums_all_voxels(iv, d.box_a, v.dims, r) / d.box_a.volume()
        if d.box_b is not None:
            f = f - _box_sums_all_voxels(iv, d.box_b, v.dims, r) / d.box_b.volume()
        out[..., i] = f
    return out


def haar_features_at(v: Volume3D, coords: np.ndarray, bank: HaarBank) -> np.ndarray:
    """Features at selected voxels only, via direct patch extraction."""
    from .scribbles import extract_patches_at
    patches = extract_patches_at(v, coords, bank.window)
    return haar_features(patches.astype(np.float64), bank).astype(np.float32)
