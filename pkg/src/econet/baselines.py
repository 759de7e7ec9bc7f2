"""Classic online likelihood models: intensity histogram, per-class Gaussian
mixtures, and a dynamically re-weighted random forest on Haar-like features.

Histogram and GMM model voxel intensity only; the forest consumes the fixed
Haar-like feature bank. All posteriors use equal class priors: spatial
balance is the regularizer's job, not the appearance model's.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import LikelihoodMap
from .scribbles import InsufficientScribblesError, ScribbleSet
from .volume import Volume3D

DEFAULT_BINS = 128
DEFAULT_GAUSSIANS = 20
GMM_VARIANCE_FLOOR = 1e-6
GMM_TOL = 1e-6
GMM_MAX_ITER = 100


def _scribble_values(v: Volume3D, coords) -> np.ndarray:
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    return v.data[c[:, 0], c[:, 1], c[:, 2]].astype(np.float64)


# ---------------------------------------------------------------------------
# Histogram
# ---------------------------------------------------------------------------

@dataclass
class HistogramModel:
    bins: int
    fg_probs: np.ndarray  # (bins,) normalized, Laplace-smoothed
    bg_probs: np.ndarray

    def to_json(self) -> dict:
        return {"bins": self.bins,
                "foreground": self.fg_probs.tolist(),
                "background": self.bg_probs.tolist()}


def _bin_index(values: np.ndarray, bins: int) -> np.ndarray:
    # intensities live in [0, 1]; 1.0 belongs to the last bin
    idx = np.floor(np.clip(values, 0.0, 1.0) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def histogram_fit(v: Volume3D, s: ScribbleSet, bins: int = DEFAULT_BINS) -> HistogramModel:
    """Per-class normalized intensity histograms with add-one smoothing."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    if s.num_foreground() == 0 or s.num_background() == 0:
        raise InsufficientScribblesError("both classes must be scribbled")
    probs = []
    for coords in (s.foreground, s.background):
        counts = np.bincount(_bin_index(_scribble_values(v, coords), bins),
                             minlength=bins).astype(np.float64)
        counts += 1.0  # keep posteriors finite in empty bins
        probs.append(counts / counts.sum())
    return HistogramModel(bins=bins, fg_probs=probs[0], bg_probs=probs[1])


def histogram_predict(v: Volume3D, m: HistogramModel) -> LikelihoodMap:
    idx = _bin_index(v.data.astype(np.float64).ravel(), m.bins)
    hf = m.fg_probs[idx]
    hb = m.bg_probs[idx]
    post = hf / (hf + hb)
    return LikelihoodMap(dims=v.dims,
                         data=post.reshape(v.dims).astype(np.float32))


# ---------------------------------------------------------------------------
# Gaussian mixture (1-D, per class, EM)
# ---------------------------------------------------------------------------

@dataclass
class GaussianMixture1D:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihoods: list[float] = field(default_factory=list)

    def density(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)[..., None]
        z = (x - self.means) ** 2 / self.variances
        comp = np.exp(-0.5 * z) / np.sqrt(2.0 * np.pi * self.variances)
        return comp @ self.weights


@dataclass
class GmmModel:
    foreground: GaussianMixture1D
    background: GaussianMixture1D

    def to_json(self) -> dict:
        def enc(m):
            return {"weights": m.weights.tolist(), "means": m.means.tolist(),
                    "variances": m.variances.tolist()}
        return {"foreground": enc(self.foreground), "background": enc(self.background)}


def _kmeanspp_means(x: np.ndarray, g: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ style seeding: next center drawn proportionally to squared
    distance from the closest existing center."""
    means = [x[rng.integers(len(x))]]
    for _ in range(1, g):
        d2 = np.min((x[:, None] - np.asarray(means)) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            means.append(x[rng.integers(len(x))])
            continue
        means.append(x[rng.choice(len(x), p=d2 / total)])
    return np.asarray(means, dtype=np.float64)


def _fit_mixture(x: np.ndarray, g: int, rng: np.random.Generator) -> GaussianMixture1D:
    n = len(x)
    if g > n:
        warnings.warn(f"reducing mixture size from {g} to the {n} available samples")
        g = n
    means = _kmeanspp_means(x, g, rng)
    variances = np.full(g, max(x.var(), GMM_VARIANCE_FLOOR))
    weights = np.full(g, 1.0 / g)
    mix = GaussianMixture1D(weights, means, variances)
    prev = -np.inf
    for _ in range(GMM_MAX_ITER):
        # E step
        z = (x[:, None] - mix.means) ** 2 / mix.variances
        log_comp = -0.5 * z - 0.5 * np.log(2.0 * np.pi * mix.variances) \
            + np.log(mix.weights + 1e-300)
        m = log_comp.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_comp - m).sum(axis=1))
        ll = float(log_norm.mean())
        mix.log_likelihoods.append(ll)
        resp = np.exp(log_comp - log_norm[:, None])
        # M step
        nk = resp.sum(axis=0) + 1e-300
        mix.weights = nk / n
        mix.means = (resp * x[:, None]).sum(axis=0) / nk
        var = (resp * (x[:, None] - mix.means) ** 2).sum(axis=0) / nk
        mix.variances = np.maximum(var, GMM_VARIANCE_FLOOR)
        if ll - prev < GMM_TOL:
            break
        prev = ll
    return mix


def gmm_fit(v: Volume3D, s: ScribbleSet, g: int = DEFAULT_GAUSSIANS,
            seed: int = 0) -> GmmModel:
    """Per-class EM over the scribbled voxel intensities."""
    if s.num_foreground() == 0 or s.num_background() == 0:
        raise InsufficientScribblesError("both classes must be scribbled")
    rng = np.random.default_rng(seed)
    fg = _fit_mixture(_scribble_values(v, s.foreground), g, rng)
    bg = _fit_mixture(_scribble_values(v, s.background), g, rng)
    return GmmModel(foreground=fg, background=bg)


def gmm_predict(v: Volume3D, m: GmmModel) -> LikelihoodMap:
    x = v.data.astype(np.float64).ravel()
    df = m.foreground.density(x)
    db = m.background.density(x)
    denom = df + db
    post = np.where(denom > 0, df / np.where(denom > 0, denom, 1.0), 0.5)
    return LikelihoodMap(dims=v.dims, data=post.reshape(v.dims).astype(np.float32))


# ---------------------------------------------------------------------------
# Weighted random forest on Haar-like features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 50
    max_depth: int = 20
    min_samples_split: int = 6


@dataclass
class DecisionTree:
    """Flat arrays, one entry per node; children -1 marks a leaf.

    Split rule is `x[feature] <= threshold`, with the threshold placed at an
    observed feature value rather than between two, so any strictly monotone
    re-scaling of a feature leaves every routing decision unchanged.
    """

    feature: np.ndarray    # int64
    threshold: np.ndarray  # float64
    left: np.ndarray       # int64
    right: np.ndarray      # int64
    w_fg: np.ndarray       # weighted class mass reaching the node
    w_bg: np.ndarray

    def predict_fg(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = np.nonzero(self.left[node] >= 0)[0]
        while active.size:
            cur = node[active]
            go_left = x[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.left[node[active]] >= 0]
        wf = self.w_fg[node]
        wb = self.w_bg[node]
        return wf / (wf + wb)


@dataclass
class ForestModel:
    config: ForestConfig
    class_weights: tuple[float, float]  # (w_f, w_b) used at fit time
    trees: list[DecisionTree]

    def to_json(self) -> dict:
        return {"num_trees": self.config.num_trees,
                "max_depth": self.config.max_depth,
                "min_samples_split": self.config.min_samples_split,
                "class_weights": [float(w) for w in self.class_weights],
                "trees": [{"feature": t.feature.tolist(),
                           "threshold": t.threshold.tolist(),
                           "left": t.left.tolist(),
                           "right": t.right.tolist(),
                           "leaf_mass": np.stack([t.w_bg, t.w_fg], axis=1).tolist()}
                          for t in self.trees]}


def _grow_tree(x, y, w, idx, cfg, mtry, rng) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    w_fg: list[float] = []
    w_bg: list[float] = []
    d = x.shape[1]

    def build(node_idx, depth) -> int:
        node_id = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        yy = y[node_idx]
        ww = w[node_idx]
        wf = float(ww[yy == 1].sum())
        wb = float(ww[yy == 0].sum())
        w_fg.append(wf)
        w_bg.append(wb)
        if (depth >= cfg.max_depth or len(node_idx) < cfg.min_samples_split
                or wf == 0.0 or wb == 0.0):
            return node_id
        best_score = -np.inf
        best = None
        for f in rng.choice(d, size=mtry, replace=False):
            vals = x[node_idx, f]
            order = np.argsort(vals, kind="stable")
            v = vals[order]
            cut = np.nonzero(v[:-1] < v[1:])[0]
            if cut.size == 0:
                continue
            wo = ww[order]
            w1 = np.cumsum(wo * (yy[order] == 1))
            w0 = np.cumsum(wo * (yy[order] == 0))
            l1, l0 = w1[cut], w0[cut]
            r1, r0 = w1[-1] - l1, w0[-1] - l0
            # maximizing sum of per-side (squared mass / mass) minimizes the
            # weighted Gini impurity of the split
            score = (l0 * l0 + l1 * l1) / (l0 + l1) + (r0 * r0 + r1 * r1) / (r0 + r1)
            j = int(np.argmax(score))
            if score[j] > best_score:
                best_score = float(score[j])
                best = (int(f), float(v[cut[j]]))
        if best is None:
            return node_id
        f, thr = best
        feature[node_id] = f
        threshold[node_id] = thr
        go_left = x[node_idx, f] <= thr
        left[node_id] = build(node_idx[go_left], depth + 1)
        right[node_id] = build(node_idx[~go_left], depth + 1)
        return node_id

    build(idx, 0)
    return DecisionTree(feature=np.array(feature, dtype=np.int64),
                        threshold=np.array(threshold),
                        left=np.array(left, dtype=np.int64),
                        right=np.array(right, dtype=np.int64),
                        w_fg=np.array(w_fg), w_bg=np.array(w_bg))


def forest_fit(features: np.ndarray, labels: np.ndarray, w_f: float, w_b: float,
               cfg: ForestConfig = ForestConfig(), seed: int = 0) -> ForestModel:
    """Bagged trees on per-voxel feature vectors, sqrt(d) candidate features
    per split, weighted Gini with the class weights re-derived from the
    current scribble balance at every interaction."""
    if cfg.num_trees < 1:
        raise ValueError("need at least one tree")
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if not (np.any(labels == 1) and np.any(labels == 0)):
        raise InsufficientScribblesError("both classes must be present")
    w_f, w_b = float(w_f), float(w_b)
    w = np.where(labels == 1, w_f, w_b)
    n, d = x.shape
    mtry = max(1, int(np.ceil(np.sqrt(d))))
    rng = np.random.default_rng(seed)
    trees = [_grow_tree(x, labels, w, rng.integers(0, n, size=n), cfg, mtry, rng)
             for _ in range(cfg.num_trees)]
    return ForestModel(config=cfg, class_weights=(w_f, w_b), trees=trees)


def forest_predict_features(features: np.ndarray, m: ForestModel) -> np.ndarray:
    """Mean leaf foreground mass fraction across trees."""
    x = np.asarray(features, dtype=np.float64)
    acc = np.zeros(len(x))
    for t in m.trees:
        acc += t.predict_fg(x)
    return acc / len(m.trees)


def forest_predict(feature_volume: np.ndarray, m: ForestModel) -> LikelihoodMap:
    dims = feature_volume.shape[:3]
    flat = feature_volume.reshape(-1, feature_volume.shape[-1])
    p = forest_predict_features(flat, m)
    return LikelihoodMap(dims=dims, data=p.reshape(dims).astype(np.float32))
