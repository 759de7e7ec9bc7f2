"""Experiment runner: method comparisons, accuracy/interaction curves and
layer-size/depth ablation sweeps on phantom or user-supplied datasets."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .methods import make_method, method_seed
from .metrics import mean_std
from .model import EcoNetConfig
from .scribbler import InteractionTrace, run_protocol
from .volume import (LabelMask, PhantomSpec, Volume3D, generate_phantom,
                     load_mask, load_volume, normalize_intensity)

REPORT_FORMAT = "econet-report-v1"


@dataclass
class BenchConfig:
    methods: tuple[str, ...] = ("econet", "econet-haar", "gmm", "histogram")
    rounds: int = 10
    seed: int = 0
    lam: float = 5.0
    sigma: float = 0.1
    warm_start: bool = True
    econet: EcoNetConfig = field(default_factory=EcoNetConfig)
    method_params: dict = field(default_factory=dict)
    phantoms: tuple[PhantomSpec, ...] = ()
    volume_paths: tuple[tuple[str, str], ...] = ()  # (volume, ground truth)
    normalize_window: tuple[float, float] | None = None  # None: data already in [0, 1]

    @classmethod
    def from_json(cls, d: dict) -> "BenchConfig":
        kw: dict = {}
        if "methods" in d:
            kw["methods"] = tuple(d["methods"])
        for k in ("rounds", "seed", "lam", "sigma", "warm_start"):
            if k in d:
                kw[k] = d[k]
        if "econet" in d:
            kw["econet"] = EcoNetConfig.from_json(d["econet"])
        if "method_params" in d:
            kw["method_params"] = dict(d["method_params"])
        ds = d.get("dataset", {})
        if "phantoms" in ds:
            kw["phantoms"] = tuple(PhantomSpec.from_json(p) for p in ds["phantoms"])
        if "volumes" in ds:
            kw["volume_paths"] = tuple((e["volume"], e["gt"]) for e in ds["volumes"])
        if "normalize_window" in ds and ds["normalize_window"] is not None:
            kw["normalize_window"] = tuple(ds["normalize_window"])
        return cls(**kw)


def build_dataset(cfg: BenchConfig) -> list[tuple[Volume3D, LabelMask]]:
    """Materialize the configured dataset; loaded volumes get normalized."""
    data: list[tuple[Volume3D, LabelMask]] = []
    for spec in cfg.phantoms:
        data.append(generate_phantom(spec))
    for vol_path, gt_path in cfg.volume_paths:
        v = load_volume(vol_path)
        if cfg.normalize_window is not None:
            v = normalize_intensity(v, cfg.normalize_window)
        data.append((v, load_mask(gt_path)))
    if not data:
        raise ValueError("dataset is empty: configure phantoms or volume paths")
    return data


def default_phantom_dataset(kind: str = "texture-ambiguous", count: int = 10,
                            dims=(64, 64, 64), base_seed: int = 100) -> list[PhantomSpec]:
    return [PhantomSpec(kind=kind, dims=tuple(dims), seed=base_seed + i)
            for i in range(count)]


@dataclass
class SampleResult:
    sample_index: int
    method: str
    dice: float | None
    assd: float | None
    total_time: float | None        # summed train + infer seconds over all rounds
    train_time: float | None
    infer_time: float | None
    scribbled_voxels: int | None
    trace: InteractionTrace | None
    error: str | None = None

    def to_json(self) -> dict:
        return {"sample": self.sample_index, "method": self.method,
                "dice": self.dice, "assd": self.assd,
                "total_time": self.total_time, "train_time": self.train_time,
                "infer_time": self.infer_time,
                "scribbled_voxels": self.scribbled_voxels,
                "error": self.error,
                "trace": self.trace.to_json() if self.trace else None}

    @classmethod
    def from_json(cls, d: dict) -> "SampleResult":
        trace = InteractionTrace.from_json(d["trace"]) if d.get("trace") else None
        return cls(sample_index=d["sample"], method=d["method"], dice=d["dice"],
                   assd=d["assd"], total_time=d["total_time"],
                   train_time=d["train_time"], infer_time=d["infer_time"],
                   scribbled_voxels=d["scribbled_voxels"], trace=trace,
                   error=d.get("error"))


@dataclass
class Report:
    config_seed: int
    rounds: int
    samples: list[SampleResult]

    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for s in self.samples:
            seen.setdefault(s.method, None)
        return list(seen)

    def per_method(self, method: str) -> list[SampleResult]:
        return [s for s in self.samples if s.method == method]

    def summary(self) -> dict:
        out = {}
        for m in self.methods():
            rows = [s for s in self.per_method(m) if s.error is None]
            dices = [s.dice for s in rows]
            assds = [s.assd for s in rows if s.assd is not None]
            times = [s.total_time for s in rows]
            scribs = [s.scribbled_voxels for s in rows]
            out[m] = {
                "n": len(rows),
                "failures": len(self.per_method(m)) - len(rows),
                "dice": mean_std(dices),
                "assd": mean_std(assds) if assds else (float("nan"), float("nan")),
                "time": mean_std(times),
                "scribbled_voxels": mean_std(scribs),
            }
        return out

    def to_json(self) -> dict:
        return {"format": REPORT_FORMAT, "seed": self.config_seed,
                "rounds": self.rounds,
                "samples": [s.to_json() for s in self.samples],
                "summary": {m: {k: list(v) if isinstance(v, tuple) else v
                                for k, v in row.items()}
                            for m, row in self.summary().items()}}

    @classmethod
    def from_json(cls, d: dict) -> "Report":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError(f"not a recognized report (format {d.get('format')!r})")
        return cls(config_seed=d["seed"], rounds=d["rounds"],
                   samples=[SampleResult.from_json(s) for s in d["samples"]])


def run_comparison(dataset, methods, cfg: BenchConfig) -> Report:
    """Run the interaction protocol for every (sample, method) cell.

    Each cell gets its own RNG stream derived from (seed, sample, method), so
    results do not depend on evaluation order. Failures are recorded on the
    affected cell and the run continues.
    """
    if not dataset or not methods:
        raise ValueError("dataset and methods must be non-empty")
    samples: list[SampleResult] = []
    for i, (v, gt) in enumerate(dataset):
        for name in methods:
            seed = method_seed(cfg.seed, i, name)
            method = make_method(name, seed=seed, econet_config=cfg.econet,
                                 warm_start=cfg.warm_start,
                                 **cfg.method_params.get(name, {}))
            try:
                trace = run_protocol(v, gt, method, rounds=cfg.rounds, seed=seed,
                                     lam=cfg.lam, sigma=cfg.sigma)
                fin = trace.final()
                t_train = sum(r.train_time for r in trace.rounds)
                t_infer = sum(r.infer_time for r in trace.rounds)
                samples.append(SampleResult(
                    sample_index=i, method=name, dice=fin.dice, assd=fin.assd,
                    total_time=t_train + t_infer, train_time=t_train,
                    infer_time=t_infer, scribbled_voxels=fin.cumulative_scribbles,
                    trace=trace))
            except Exception as exc:
                samples.append(SampleResult(
                    sample_index=i, method=name, dice=None, assd=None,
                    total_time=None, train_time=None, infer_time=None,
                    scribbled_voxels=None, trace=None, error=repr(exc)))
    return Report(config_seed=cfg.seed, rounds=cfg.rounds, samples=samples)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

def dice_cdf_curve(dices, thresholds=None) -> list[tuple[float, float]]:
    """(threshold, fraction of samples strictly below it) pairs, non-decreasing."""
    vals = np.asarray(sorted(d for d in dices if d is not None), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("no per-sample scores to build a curve from")
    if thresholds is None:
        thresholds = np.concatenate([vals, [1.01]])
    return [(float(t), float(np.mean(vals < t))) for t in thresholds]


def scribbles_vs_dice_curve(traces) -> list[tuple[float, float]]:
    """Per-round (mean cumulative scribbled voxels, mean score) across traces."""
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to aggregate")
    rounds = len(traces[0].rounds)
    if any(len(t.rounds) != rounds for t in traces):
        raise ValueError("traces disagree on round count")
    out = []
    for r in range(rounds):
        s = float(np.mean([t.rounds[r].cumulative_scribbles for t in traces]))
        d = float(np.mean([t.rounds[r].dice for t in traces]))
        out.append((s, d))
    return out


def voxels_to_reach(curve, target: float) -> float | None:
    """Smallest mean scribble count at which the curve reaches `target`;
    None when it plateaus below it."""
    for s, d in curve:
        if d >= target:
            return s
    return None


# ---------------------------------------------------------------------------
# Ablation sweeps
# ---------------------------------------------------------------------------

ABLATION_AXES = ("K", "filters", "fc_sizes", "L_num")


def _config_for(axis: str, value, base: EcoNetConfig) -> EcoNetConfig:
    if axis == "K":
        return replace(base, kernel_size=int(value))
    if axis == "filters":
        return replace(base, num_filters=int(value))
    if axis == "fc_sizes":
        return replace(base, fc_sizes=tuple(int(x) for x in value))
    if axis == "L_num":
        return replace(base, num_conv_layers=int(value))
    raise ValueError(f"unknown ablation axis {axis!r}; known: {ABLATION_AXES}")


def ablation_sweep(axis: str, values, dataset, cfg: BenchConfig) -> list[dict]:
    """One comparison run of the online network per axis value.

    Returns rows {value, dice mean/std, train_time, infer_time}; timings are
    the mean per-sample totals over the protocol, measured around the train
    and infer calls only.
    """
    rows = []
    for value in values:
        sub = replace(cfg, econet=_config_for(axis, value, cfg.econet))
        report = run_comparison(dataset, ["econet"], sub)
        ok = [s for s in report.samples if s.error is None]
        dmean, dstd = mean_std([s.dice for s in ok])
        tmean, _ = mean_std([s.train_time for s in ok])
        imean, _ = mean_std([s.infer_time for s in ok])
        rows.append({"axis": axis, "value": value, "dice_mean": dmean,
                     "dice_std": dstd, "train_time": tmean, "infer_time": imean,
                     "failures": len(report.samples) - len(ok)})
    return rows


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_report(report: Report, out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {"json": os.path.join(out_dir, "report.json"),
             "csv": os.path.join(out_dir, "report.csv"),
             "curves": os.path.join(out_dir, "curves.csv"),
             "traces": os.path.join(out_dir, "traces.csv")}
    with open(paths["json"], "w") as f:
        json.dump(report.to_json(), f, indent=1)
    with open(paths["csv"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["sample", "method", "dice", "assd", "total_time",
                    "train_time", "infer_time", "scribbled_voxels", "error"])
        for s in report.samples:
            w.writerow([s.sample_index, s.method, s.dice, s.assd, s.total_time,
                        s.train_time, s.infer_time, s.scribbled_voxels,
                        s.error or ""])
    with open(paths["traces"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("sample",) + InteractionTrace.CSV_HEADER)
        for s in report.samples:
            if s.trace is not None:
                for row in s.trace.to_csv_rows():
                    w.writerow([s.sample_index] + row)
    write_curves(report, paths["curves"])
    return paths


def write_curves(report: Report, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "curve", "x", "y"])
        for m in report.methods():
            ok = [s for s in report.per_method(m) if s.error is None]
            if not ok:
                continue
            for t, frac in dice_cdf_curve([s.dice for s in ok]):
                w.writerow([m, "dice_cdf", t, frac])
            for s_count, d in scribbles_vs_dice_curve([s.trace for s in ok]):
                w.writerow([m, "scribbles_vs_dice", s_count, d])


def load_report(path: str) -> Report:
    with open(path) as f:
        return Report.from_json(json.load(f))


def write_ablation(rows, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["axis", "value", "dice_mean", "dice_std",
                    "train_time", "infer_time", "failures"])
        for r in rows:
            w.writerow([r["axis"], r["value"], r["dice_mean"], r["dice_std"],
                        r["train_time"], r["infer_time"], r["failures"]])


def warmup() -> None:
    """Prime JIT compilation and BLAS threads so the first timed cell is not
    billed for one-time costs; its output is discarded."""
    from .graphcut import regularize
    from .model import LikelihoodMap, build_model, infer_likelihood
    spec = PhantomSpec(dims=(32, 32, 32), seed=0, lesion_count=1,
                       lesion_radius=(5, 6))
    v, _ = generate_phantom(spec)
    cfg = EcoNetConfig(kernel_size=3, num_filters=4, fc_sizes=(4,), epochs=1, seed=0)
    model = build_model(cfg)
    lik = infer_likelihood(v, model)
    regularize(lik, v, lam=5.0, sigma=0.1)
