"""3-D scalar volumes: data model, file I/O, normalization and synthetic phantoms.

Voxel ordering convention used across the whole package: a volume with
dims (nx, ny, nz) is stored as a numpy array of shape (nx, ny, nz); the
flat on-disk order is x-fastest, i.e. flat[x + nx*(y + ny*z)] == data[x, y, z]
(numpy Fortran order). This matches the NIfTI-1 on-disk layout.
"""
from __future__ import annotations

import gzip
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class VolumeError(Exception):
    """Raised for unreadable files, bad headers or dimension mismatches."""


# Default CT windowing: lung parenchyma through soft tissue, in Hounsfield units.
DEFAULT_HU_WINDOW = (-1024.0, 600.0)


@dataclass(frozen=True)
class Volume3D:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    data: np.ndarray  # float32, shape == dims, read-only

    def __post_init__(self):
        nx, ny, nz = self.dims
        if nx <= 0 or ny <= 0 or nz <= 0:
            raise VolumeError(f"non-positive dims {self.dims}")
        if self.data.shape != (nx, ny, nz):
            raise VolumeError(
                f"data shape {self.data.shape} does not match dims {self.dims}")
        if not np.all(np.isfinite(self.data)):
            raise VolumeError("volume contains non-finite intensities")
        self.data.flags.writeable = False

    @classmethod
    def from_array(cls, arr, spacing=(1.0, 1.0, 1.0)) -> "Volume3D":
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.ndim != 3:
            raise VolumeError(f"expected a 3-D array, got shape {arr.shape}")
        return cls(dims=arr.shape, spacing=tuple(float(s) for s in spacing), data=arr)

    @property
    def num_voxels(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class LabelMask:
    dims: tuple[int, int, int]
    values: np.ndarray  # uint8 in {0, 1}, shape == dims, read-only

    def __post_init__(self):
        if self.values.shape != tuple(self.dims):
            raise VolumeError(
                f"mask shape {self.values.shape} does not match dims {self.dims}")
        if self.values.dtype != np.uint8:
            raise VolumeError("mask values must be uint8")
        bad = np.setdiff1d(np.unique(self.values), [0, 1])
        if bad.size:
            raise VolumeError(f"mask contains non-binary values {bad.tolist()}")
        self.values.flags.writeable = False

    @classmethod
    def from_array(cls, arr) -> "LabelMask":
        arr = np.ascontiguousarray(np.asarray(arr) != 0, dtype=np.uint8)
        return cls(dims=arr.shape, values=arr)

    def foreground_count(self) -> int:
        return int(self.values.sum())


# ---------------------------------------------------------------------------
# NIfTI-1 reader/writer (minimal, single-file .nii / .nii.gz)
# ---------------------------------------------------------------------------

_NIFTI_DTYPES = {2: np.uint8, 4: np.int16, 8: np.int32, 16: np.float32, 64: np.float64}
_NIFTI_CODES = {v: k for k, v in _NIFTI_DTYPES.items()}


def _open_maybe_gzip(path, mode="rb"):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, mode)
    return open(path, mode)


def _read_nifti(path: str) -> Volume3D:
    try:
        return _read_nifti_inner(path)
    except (OSError, EOFError) as exc:  # gzip truncation, bad streams
        raise VolumeError(f"{path}: unreadable volume ({exc})") from exc


def _read_nifti_inner(path: str) -> Volume3D:
    with _open_maybe_gzip(path) as f:
        hdr = f.read(348)
        if len(hdr) < 348:
            raise VolumeError(f"{path}: truncated NIfTI header")
        # header may be little or big endian; sizeof_hdr disambiguates
        for bo in ("<", ">"):
            sizeof_hdr = struct.unpack(bo + "i", hdr[0:4])[0]
            if sizeof_hdr == 348:
                break
        else:
            raise VolumeError(f"{path}: not a NIfTI-1 file (bad sizeof_hdr)")
        magic = hdr[344:348]
        if magic[:3] not in (b"n+1", b"ni1"):
            raise VolumeError(f"{path}: missing NIfTI magic")
        dim = struct.unpack(bo + "8h", hdr[40:56])
        ndim = dim[0]
        if ndim < 3 or any(d > 1 for d in dim[4:4 + max(0, ndim - 3)]):
            raise VolumeError(f"{path}: only 3-D volumes are supported (dim={dim})")
        nx, ny, nz = dim[1], dim[2], dim[3]
        datatype = struct.unpack(bo + "h", hdr[70:72])[0]
        if datatype not in _NIFTI_DTYPES:
            raise VolumeError(f"{path}: unsupported NIfTI datatype code {datatype}")
        dtype = np.dtype(_NIFTI_DTYPES[datatype]).newbyteorder(bo)
        pixdim = struct.unpack(bo + "8f", hdr[76:108])
        vox_offset = int(struct.unpack(bo + "f", hdr[108:112])[0])
        scl_slope = struct.unpack(bo + "f", hdr[112:116])[0]
        scl_inter = struct.unpack(bo + "f", hdr[116:120])[0]
        f.seek(vox_offset)
        count = nx * ny * nz
        payload = f.read(count * dtype.itemsize)
    if len(payload) != count * dtype.itemsize:
        raise VolumeError(
            f"{path}: payload holds {len(payload) // dtype.itemsize} values, "
            f"header promises {count}")
    arr = np.frombuffer(payload, dtype=dtype)
    data = np.asarray(arr.reshape((nx, ny, nz), order="F"), dtype=np.float32)
    if scl_slope not in (0.0, 1.0) or (scl_slope != 0.0 and scl_inter != 0.0):
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    spacing = tuple(float(abs(p)) if p != 0 else 1.0 for p in pixdim[1:4])
    return Volume3D.from_array(np.ascontiguousarray(data), spacing)


def _write_nifti(path: str, arr: np.ndarray, spacing, dtype=np.float32) -> None:
    arr = np.asarray(arr, dtype=dtype)
    code = _NIFTI_CODES[np.dtype(dtype).type]
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, *arr.shape, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, code)
    struct.pack_into("<h", hdr, 72, np.dtype(dtype).itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, *[float(s) for s in spacing], 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)   # vox_offset
    struct.pack_into("<f", hdr, 112, 1.0)     # scl_slope
    struct.pack_into("<f", hdr, 116, 0.0)     # scl_inter
    hdr[344:348] = b"n+1\x00"
    payload = arr.ravel(order="F").tobytes()
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "wb") as f:
        f.write(bytes(hdr))
        f.write(b"\x00" * 4)  # no header extensions
        f.write(payload)


# ---------------------------------------------------------------------------
# Raw fallback format: little-endian float32 payload + JSON sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(path: str) -> str:
    return path + ".json"


def _read_raw(path: str) -> Volume3D:
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise VolumeError(f"missing sidecar {sidecar}")
    with open(sidecar) as f:
        meta = json.load(f)
    dims = tuple(int(d) for d in meta["dims"])
    spacing = tuple(float(s) for s in meta.get("spacing", (1.0, 1.0, 1.0)))
    arr = np.fromfile(path, dtype="<f4")
    if arr.size != int(np.prod(dims)):
        raise VolumeError(
            f"{path}: payload holds {arr.size} values, sidecar dims {dims} "
            f"need {int(np.prod(dims))}")
    data = np.ascontiguousarray(arr.reshape(dims, order="F"))
    return Volume3D.from_array(data, spacing)


def _write_raw(path: str, arr: np.ndarray, spacing) -> None:
    arr = np.asarray(arr, dtype=np.float32)
    arr.ravel(order="F").astype("<f4").tofile(path)
    with open(_sidecar_path(path), "w") as f:
        json.dump({"dims": list(arr.shape), "spacing": [float(s) for s in spacing]}, f)


def load_volume(path: str) -> Volume3D:
    """Load a volume from .nii/.nii.gz or the raw+sidecar format."""
    if not os.path.exists(path):
        raise VolumeError(f"no such file: {path}")
    if path.endswith(".nii") or path.endswith(".nii.gz"):
        return _read_nifti(path)
    if path.endswith(".raw"):
        return _read_raw(path)
    # fall back on content sniffing for unusual extensions
    try:
        return _read_nifti(path)
    except VolumeError:
        return _read_raw(path)


def save_volume(v: Volume3D, path: str) -> None:
    """Write a volume as NIfTI-1 float32 (.nii/.nii.gz) or raw+sidecar (.raw)."""
    if path.endswith(".raw"):
        _write_raw(path, v.data, v.spacing)
    else:
        _write_nifti(path, v.data, v.spacing, dtype=np.float32)


def save_mask(mask: LabelMask, path: str, spacing=(1.0, 1.0, 1.0)) -> None:
    """Write a binary mask as NIfTI-1 uint8 or raw float32+sidecar."""
    if path.endswith(".raw"):
        _write_raw(path, mask.values.astype(np.float32), spacing)
    else:
        _write_nifti(path, mask.values, spacing, dtype=np.uint8)


def load_mask(path: str) -> LabelMask:
    v = load_volume(path)
    return LabelMask.from_array(v.data > 0.5)


# ---------------------------------------------------------------------------
# Intensity normalization
# ---------------------------------------------------------------------------

def normalize_intensity(v: Volume3D, window: tuple[float, float] = DEFAULT_HU_WINDOW) -> Volume3D:
    """Clamp intensities to [lo, hi] and map the window affinely onto [0, 1]."""
    lo, hi = float(window[0]), float(window[1])
    if lo >= hi:
        raise ValueError(f"window lo must be < hi, got ({lo}, {hi})")
    out = np.clip(v.data, lo, hi)
    out = (out - lo) / (hi - lo)
    return Volume3D(dims=v.dims, spacing=v.spacing, data=out.astype(np.float32))


# ---------------------------------------------------------------------------
# Synthetic phantoms
# ---------------------------------------------------------------------------

PHANTOM_KINDS = ("intensity-separable", "texture-ambiguous")

# Intensity model shared by both kinds. The texture-ambiguous phantom draws
# voxels from the same two-component mixture on both sides of the ground
# truth and adds the same +-A micro-contrast everywhere, so the marginal
# histograms of lesion and background coincide exactly. What differs is the
# spatial arrangement: inside lesions the mixture component varies smoothly
# (blobs) and the micro-contrast follows the deterministic voxel parity,
# while the background draws both independently per voxel.
_COMPONENT_LO = 0.41
_COMPONENT_HI = 0.59
_TEXTURE_NOISE_STD = 0.11
_TEXTURE_PARITY_AMP = 0.11
_TEXTURE_BLOB_SIGMA = 2.0
_SEPARABLE_BG_MEAN = 0.25
_SEPARABLE_FG_MEAN = 0.75
_SEPARABLE_NOISE_STD = 0.05


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "texture-ambiguous"
    dims: tuple[int, int, int] = (64, 64, 64)
    seed: int = 0
    lesion_count: int = 3
    lesion_radius: tuple[float, float] = (12.0, 16.0)

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")
        if any(d < 32 for d in self.dims):
            raise ValueError(f"phantom dims must be >= 32 per axis, got {self.dims}")
        if self.lesion_count < 1:
            raise ValueError("lesion_count must be >= 1")
        rmin, rmax = self.lesion_radius
        # r >= 4 keeps every lesion above the 6^3-voxel floor the synthetic
        # scribbler needs in order to place corrections inside it.
        if rmin < 4.0 or rmax < rmin:
            raise ValueError(f"lesion radius range must satisfy 4 <= rmin <= rmax, got {self.lesion_radius}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "dims": list(self.dims), "seed": self.seed,
                "lesion_count": self.lesion_count,
                "lesion_radius": list(self.lesion_radius)}

    @classmethod
    def from_json(cls, d: dict) -> "PhantomSpec":
        return cls(kind=d.get("kind", "texture-ambiguous"),
                   dims=tuple(d.get("dims", (64, 64, 64))),
                   seed=int(d.get("seed", 0)),
                   lesion_count=int(d.get("lesion_count", 3)),
                   lesion_radius=tuple(d.get("lesion_radius", (6.0, 10.0))))


def _lesion_mask(spec: PhantomSpec, rng: np.random.Generator) -> np.ndarray:
    nx, ny, nz = spec.dims
    rmin, rmax = spec.lesion_radius
    if any(2 * rmax + 2 > d for d in spec.dims):
        raise ValueError(f"lesion radius {rmax} cannot fit in dims {spec.dims}")
    gx, gy, gz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    mask = np.zeros(spec.dims, dtype=bool)
    for _ in range(spec.lesion_count):
        r = rng.uniform(rmin, rmax)
        m = int(np.ceil(r)) + 1
        cx = rng.uniform(m, nx - 1 - m)
        cy = rng.uniform(m, ny - 1 - m)
        cz = rng.uniform(m, nz - 1 - m)
        mask |= (gx - cx) ** 2 + (gy - cy) ** 2 + (gz - cz) ** 2 <= r ** 2
    return mask


def generate_phantom(spec: PhantomSpec) -> tuple[Volume3D, LabelMask]:
    """Deterministically synthesize a (volume, ground-truth mask) pair.

    intensity-separable: lesion and background intensities differ by many
    noise standard deviations, so a midpoint threshold nearly recovers the
    mask. texture-ambiguous: both sides share the same marginal intensity
    mixture; the lesion's mixture component varies smoothly in space while
    the background's is drawn independently per voxel, so only local texture
    (not single-voxel intensity) is informative.
    """
    rng = np.random.default_rng(spec.seed)
    mask = _lesion_mask(spec, rng)
    if int(mask.sum()) < 6 ** 3:
        raise ValueError("generated lesion smaller than the 6^3-voxel floor")
    if spec.kind == "intensity-separable":
        data = rng.normal(_SEPARABLE_BG_MEAN, _SEPARABLE_NOISE_STD, spec.dims)
        data[mask] = rng.normal(_SEPARABLE_FG_MEAN, _SEPARABLE_NOISE_STD, int(mask.sum()))
    else:
        # Smooth random field thresholded at its median level gives each
        # lesion voxel a marginal 50/50 component choice with local
        # correlation; background voxels flip a fair coin independently.
        smooth = ndimage.gaussian_filter(rng.standard_normal(spec.dims), _TEXTURE_BLOB_SIGMA)
        fg_hi = smooth > 0.0
        bg_hi = rng.random(spec.dims) < 0.5
        hi = np.where(mask, fg_hi, bg_hi)
        data = np.where(hi, _COMPONENT_HI, _COMPONENT_LO)
        # micro-contrast: lesion follows voxel parity, background flips coins;
        # both are a fair +-A per voxel, so marginals still match
        gx, gy, gz = np.meshgrid(*(np.arange(d) for d in spec.dims), indexing="ij")
        parity = ((gx + gy + gz) % 2) * 2.0 - 1.0
        bg_sign = (rng.random(spec.dims) < 0.5) * 2.0 - 1.0
        data = data + _TEXTURE_PARITY_AMP * np.where(mask, parity, bg_sign)
        data = data + rng.normal(0.0, _TEXTURE_NOISE_STD, spec.dims)
    data = np.clip(data, 0.0, 1.0)
    vol = Volume3D.from_array(data.astype(np.float32))
    return vol, LabelMask.from_array(mask)
