"""Uniform interface over the likelihood models for the interaction loop.

A method owns whatever state survives between interaction rounds (network
weights for the online net, nothing for the refit-from-scratch baselines)
and reports training and inference wall time separately.
"""
from __future__ import annotations

import time
import zlib
from dataclasses import replace

import numpy as np

from . import baselines
from .haarlike import default_bank, haar_feature_volume, haar_features
from .model import (EcoNet, EcoNetConfig, LikelihoodMap, infer_likelihood,
                    train_online)
from .scribbles import ScribbleSet
from .volume import Volume3D

METHOD_NAMES = ("econet", "econet-haar", "dybaorf-haar", "gmm", "histogram")


def method_seed(base_seed: int, sample_index: int, method_name: str) -> int:
    """Stable per-(sample, method) stream so run order cannot matter."""
    h = zlib.crc32(method_name.encode())
    return int(np.random.SeedSequence([base_seed, sample_index, h]).generate_state(1)[0])


class EcoNetMethod:
    """Online network; warm-starts from the previous round's weights by default."""

    def __init__(self, config: EcoNetConfig | None = None, warm_start: bool = True,
                 seed: int | None = None):
        cfg = config if config is not None else EcoNetConfig()
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        self.config = cfg
        self.warm_start = warm_start
        self.name = "econet-haar" if cfg.feature_mode == "haar" else "econet"
        self.model: EcoNet | None = None

    def update(self, v: Volume3D, s: ScribbleSet):
        warm = self.model if self.warm_start else None
        t0 = time.perf_counter()
        self.model = train_online(v, s, self.config, warm=warm)
        t1 = time.perf_counter()
        likelihood = infer_likelihood(v, self.model)
        t2 = time.perf_counter()
        return likelihood, t1 - t0, t2 - t1


class HistogramMethod:
    def __init__(self, bins: int = baselines.DEFAULT_BINS, seed: int | None = None):
        self.bins = bins
        self.name = "histogram"
        self.model = None

    def update(self, v: Volume3D, s: ScribbleSet):
        t0 = time.perf_counter()
        self.model = baselines.histogram_fit(v, s, bins=self.bins)
        t1 = time.perf_counter()
        likelihood = baselines.histogram_predict(v, self.model)
        t2 = time.perf_counter()
        return likelihood, t1 - t0, t2 - t1


class GmmMethod:
    def __init__(self, gaussians: int = baselines.DEFAULT_GAUSSIANS, seed: int = 0):
        self.gaussians = gaussians
        self.seed = seed
        self.name = "gmm"
        self.model = None

    def update(self, v: Volume3D, s: ScribbleSet):
        t0 = time.perf_counter()
        self.model = baselines.gmm_fit(v, s, g=self.gaussians, seed=self.seed)
        t1 = time.perf_counter()
        likelihood = baselines.gmm_predict(v, self.model)
        t2 = time.perf_counter()
        return likelihood, t1 - t0, t2 - t1


class ForestMethod:
    """Weighted random forest on Haar-like features, fully refit per round
    with the class weights recomputed from the current scribble balance."""

    def __init__(self, config: baselines.ForestConfig = baselines.ForestConfig(),
                 window: int = 7, bank_size: int = 64, seed: int = 0):
        self.config = config
        self.bank = default_bank(window=window, size=bank_size, seed=0)
        self.seed = seed
        self.name = "dybaorf-haar"
        self.model = None
        self._feature_cache: tuple[int, np.ndarray] | None = None

    def _features(self, v: Volume3D) -> np.ndarray:
        key = id(v.data)
        if self._feature_cache is None or self._feature_cache[0] != key:
            self._feature_cache = (key, haar_feature_volume(v, self.bank))
        return self._feature_cache[1]

    def update(self, v: Volume3D, s: ScribbleSet):
        from .scribbles import class_weights
        t0 = time.perf_counter()
        w_f, w_b = class_weights(s)
        fv = self._features(v)
        coords, labels = s.coords_and_labels()
        feats = fv[coords[:, 0], coords[:, 1], coords[:, 2]]
        self.model = baselines.forest_fit(feats, labels, w_f, w_b,
                                          cfg=self.config, seed=self.seed)
        t1 = time.perf_counter()
        likelihood = baselines.forest_predict(fv, self.model)
        t2 = time.perf_counter()
        return likelihood, t1 - t0, t2 - t1


def make_method(name: str, seed: int = 0, econet_config: EcoNetConfig | None = None,
                warm_start: bool = True, **params):
    """Instantiate a registered likelihood method by name."""
    if name == "econet":
        cfg = econet_config if econet_config is not None else EcoNetConfig()
        cfg = replace(cfg, feature_mode="learned-conv", seed=seed)
        return EcoNetMethod(cfg, warm_start=warm_start)
    if name == "econet-haar":
        cfg = econet_config if econet_config is not None else EcoNetConfig()
        cfg = replace(cfg, feature_mode="haar", seed=seed)
        return EcoNetMethod(cfg, warm_start=warm_start)
    if name == "dybaorf-haar":
        fc = baselines.ForestConfig(
            num_trees=params.get("num_trees", 50),
            max_depth=params.get("max_depth", 20),
            min_samples_split=params.get("min_samples_split", 6))
        return ForestMethod(fc, window=params.get("window", 7),
                            bank_size=params.get("bank_size", 64), seed=seed)
    if name == "gmm":
        return GmmMethod(gaussians=params.get("gaussians", 20), seed=seed)
    if name == "histogram":
        return HistogramMethod(bins=params.get("bins", 128))
    raise ValueError(f"unknown method {name!r}; known: {', '.join(METHOD_NAMES)}")
