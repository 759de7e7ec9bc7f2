"""Synthetic annotator: samples corrective scribbles from segmentation errors.

Each interaction round localizes the under-segmented (false negative) and
over-segmented (false positive) regions by connected-component analysis,
labels a handful of voxels inside every sufficiently large region, refits
the likelihood method on the accumulated scribbles and regularizes the new
likelihood. The very first round has no prediction yet, so the ground-truth
foreground and background act as the two mis-segmented regions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .graphcut import regularize
from .metrics import UndefinedMetricError, assd, dice
from .scribbles import ScribbleSet, merge_scribbles
from .volume import LabelMask, Volume3D

# regions smaller than this are considered too small to scribble in
MIN_REGION_VOXELS = 6 ** 3
VOXELS_PER_SAMPLE = 1000

_CONN26 = np.ones((3, 3, 3), dtype=bool)


def sample_count(v_m: int) -> int:
    """Scribbles to place in a mis-segmented region of v_m voxels:
    0 below the 6^3 floor, else ceil(v_m / 1000)."""
    if v_m < 0:
        raise ValueError("region volume cannot be negative")
    if v_m < MIN_REGION_VOXELS:
        return 0
    return -(-v_m // VOXELS_PER_SAMPLE)


def missegmented_regions(pred: LabelMask, gt: LabelMask) -> list[tuple[np.ndarray, int]]:
    """26-connected components of the error map.

    Returns (coords, correction_label) per component: false-negative regions
    carry a foreground correction (1), false-positive regions a background
    correction (0). Coordinates are (n, 3) int arrays.
    """
    if pred.dims != gt.dims:
        raise ValueError(f"mask dims differ: {pred.dims} vs {gt.dims}")
    p = pred.values.astype(bool)
    g = gt.values.astype(bool)
    out: list[tuple[np.ndarray, int]] = []
    for err, label in (((g & ~p), 1), ((p & ~g), 0)):
        comp, n = ndimage.label(err, structure=_CONN26)
        for i in range(1, n + 1):
            coords = np.argwhere(comp == i)
            out.append((coords, label))
    return out


@dataclass
class RoundRecord:
    round_index: int
    new_foreground: int
    new_background: int
    cumulative_scribbles: int
    dice: float
    assd: float | None          # None when the surface distance is undefined
    train_time: float
    infer_time: float

    def to_json(self) -> dict:
        return {"round": self.round_index,
                "new_foreground": self.new_foreground,
                "new_background": self.new_background,
                "cumulative_scribbles": self.cumulative_scribbles,
                "dice": self.dice, "assd": self.assd,
                "train_time": self.train_time, "infer_time": self.infer_time}


@dataclass
class InteractionTrace:
    method: str
    seed: int
    rounds: list[RoundRecord] = field(default_factory=list)

    def final(self) -> RoundRecord:
        return self.rounds[-1]

    def cumulative_counts(self) -> list[int]:
        return [r.cumulative_scribbles for r in self.rounds]

    def dices(self) -> list[float]:
        return [r.dice for r in self.rounds]

    def to_json(self) -> dict:
        return {"method": self.method, "seed": self.seed,
                "rounds": [r.to_json() for r in self.rounds]}

    CSV_HEADER = ("method", "seed", "round", "new_foreground", "new_background",
                  "cumulative_scribbles", "dice", "assd", "train_time",
                  "infer_time")

    def to_csv_rows(self) -> list[list]:
        return [[self.method, self.seed, r.round_index, r.new_foreground,
                 r.new_background, r.cumulative_scribbles, r.dice,
                 "" if r.assd is None else r.assd, r.train_time, r.infer_time]
                for r in self.rounds]

    @classmethod
    def from_json(cls, d: dict) -> "InteractionTrace":
        rounds = [RoundRecord(round_index=r["round"],
                              new_foreground=r["new_foreground"],
                              new_background=r["new_background"],
                              cumulative_scribbles=r["cumulative_scribbles"],
                              dice=r["dice"], assd=r["assd"],
                              train_time=r["train_time"],
                              infer_time=r["infer_time"])
                  for r in d["rounds"]]
        return cls(method=d["method"], seed=d["seed"], rounds=rounds)


class ProtocolError(Exception):
    """A likelihood method failed mid-protocol; carries the round index."""

    def __init__(self, round_index, cause):
        super().__init__(f"round {round_index}: {cause!r}")
        self.round_index = round_index
        self.cause = cause


def _sample_region(coords: np.ndarray, n: int, taken: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement draw, excluding already-scribbled voxels."""
    if n == 0 or len(coords) == 0:
        return coords[:0]
    fresh = coords[~taken[coords[:, 0], coords[:, 1], coords[:, 2]]]
    if len(fresh) == 0:
        return fresh
    k = min(n, len(fresh))
    pick = rng.choice(len(fresh), size=k, replace=False)
    return fresh[pick]


def run_protocol(v: Volume3D, gt: LabelMask, method, rounds: int = 10,
                 seed: int = 0, lam: float = 5.0, sigma: float = 0.1,
                 spacing=None) -> InteractionTrace:
    """Drive `method` through the synthetic interaction protocol.

    `method` follows the likelihood-method interface: a `name` attribute and
    `update(volume, scribbles) -> (LikelihoodMap, train_time, infer_time)`.
    The number of voxels scribbled each round depends only on the previous
    prediction, the ground truth and the seed, so better methods ask for
    fewer corrections. Per-round metrics cover the regularized mask.
    """
    if gt.foreground_count() == 0:
        raise ValueError("ground truth has no foreground")
    if spacing is None:
        spacing = v.spacing
    scrib = ScribbleSet()
    taken = np.zeros(v.dims, dtype=bool)
    pred: LabelMask | None = None
    trace = InteractionTrace(method=getattr(method, "name", str(method)), seed=seed)
    for rnd in range(1, rounds + 1):
        rng = np.random.default_rng([seed, rnd])
        if pred is None:
            g = gt.values.astype(bool)
            regions = [(np.argwhere(g), 1), (np.argwhere(~g), 0)]
        else:
            regions = missegmented_regions(pred, gt)
        new = ScribbleSet()
        for coords, label in regions:
            chosen = _sample_region(coords, sample_count(len(coords)), taken, rng)
            for c in chosen:
                new.add(c, label)
                taken[c[0], c[1], c[2]] = True
        n_fg, n_bg = new.num_foreground(), new.num_background()
        scrib = merge_scribbles(scrib, new)
        try:
            likelihood, t_train, t_infer = method.update(v, scrib)
            pred = regularize(likelihood, v, lam=lam, sigma=sigma)
        except Exception as exc:  # propagate with round context
            raise ProtocolError(rnd, exc) from exc
        d = dice(pred, gt)
        try:
            a = assd(pred, gt, spacing=spacing)
        except UndefinedMetricError:
            a = None
        trace.rounds.append(RoundRecord(
            round_index=rnd, new_foreground=n_fg, new_background=n_bg,
            cumulative_scribbles=len(scrib), dice=d, assd=a,
            train_time=t_train, infer_time=t_infer))
    return trace
