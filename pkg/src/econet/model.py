"""Patch-trained online likelihood network with fully-convolutional inference.

The network is deliberately small: a stack of 3-D convolution blocks
(conv + batchnorm + ReLU, one block by default) feeding a three-layer
classifier head (dense + batchnorm + ReLU + dropout, twice, then a dense
two-class output). Training consumes only K^3 patches centered on scribbled
voxels; inference runs the same weights over the whole volume by replication-
padding the convolution stack and applying the dense head voxel-wise.

In "haar" feature mode the convolution stack is replaced by the fixed
Haar-like feature bank and only the head is learned.
"""
from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .haarlike import HaarBank, default_bank, haar_feature_volume, haar_features
from .scribbles import (InsufficientScribblesError, ScribbleSet, class_weights,
                        extract_patches)
from .volume import Volume3D

CHECKPOINT_TAG = "econet-checkpoint-v1"

FEATURE_MODES = ("learned-conv", "haar")


class TrainingDivergedError(Exception):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class EcoNetConfig:
    kernel_size: int = 7
    num_filters: int = 128
    fc_sizes: tuple[int, ...] = (32, 16)
    num_classes: int = 2
    num_conv_layers: int = 1
    dropout: float = 0.3
    epochs: int = 200
    lr_schedule: tuple[tuple[int, float], ...] = ((0, 0.01), (140, 0.001))
    seed: int = 0
    feature_mode: str = "learned-conv"
    haar_bank_size: int = 64
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    full_batch_cap: int = 4096
    minibatch_size: int = 1024
    dtype: str = "float32"

    def __post_init__(self):
        if self.kernel_size % 2 == 0 or self.kernel_size < 3:
            raise ValueError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
        if self.num_conv_layers < 1:
            raise ValueError("num_conv_layers must be >= 1")
        if self.num_classes != 2:
            raise ValueError("only two-class likelihoods are supported")
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature_mode {self.feature_mode!r}")
        if not self.fc_sizes:
            raise ValueError("fc_sizes must name at least one hidden layer")

    @property
    def patch_edge(self) -> int:
        """Training patch edge: the receptive field of the convolution stack.

        One conv layer sees exactly K^3; each extra layer widens the field by
        K - 1 so the stack still reduces a patch to a single feature vector.
        """
        if self.feature_mode == "haar":
            return self.kernel_size
        return self.kernel_size + (self.num_conv_layers - 1) * (self.kernel_size - 1)

    def schedule(self) -> nn.LrSchedule:
        return nn.LrSchedule(points=self.lr_schedule)

    def architecture_signature(self) -> tuple:
        """Fields that fix parameter shapes; warm starts must agree on these."""
        return (self.kernel_size, self.num_filters, self.fc_sizes,
                self.num_classes, self.num_conv_layers, self.feature_mode,
                self.haar_bank_size, self.dtype)

    def to_json(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["fc_sizes"] = list(self.fc_sizes)
        d["lr_schedule"] = {str(e): lr for e, lr in self.lr_schedule}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "EcoNetConfig":
        d = dict(d)
        if "fc_sizes" in d:
            d["fc_sizes"] = tuple(d["fc_sizes"])
        if "lr_schedule" in d and isinstance(d["lr_schedule"], dict):
            d["lr_schedule"] = tuple(sorted((int(e), float(lr))
                                            for e, lr in d["lr_schedule"].items()))
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class LikelihoodMap:
    dims: tuple[int, int, int]
    data: np.ndarray  # float32 in [0, 1], shape == dims

    def __post_init__(self):
        if self.data.shape != tuple(self.dims):
            raise ValueError(f"likelihood shape {self.data.shape} != dims {self.dims}")


class EcoNet:
    """Layer stack plus the RNG stream that drives dropout and batching."""

    def __init__(self, config: EcoNetConfig):
        self.config = config
        dtype = np.dtype(config.dtype)
        rng = np.random.default_rng(config.seed)
        self.blocks: list = []
        if config.feature_mode == "haar":
            self.bank: HaarBank | None = default_bank(
                window=config.kernel_size, size=config.haar_bank_size, seed=config.seed)
            head_in = len(self.bank)
        else:
            self.bank = None
            in_ch = 1
            for _ in range(config.num_conv_layers):
                self.blocks.append(nn.Conv3d(in_ch, config.num_filters,
                                             config.kernel_size, rng, dtype))
                self.blocks.append(nn.BatchNorm(config.num_filters,
                                                config.bn_momentum, config.bn_eps, dtype))
                self.blocks.append(nn.ReLU())
                in_ch = config.num_filters
            head_in = config.num_filters
        for width in config.fc_sizes:
            self.blocks.append(nn.Linear(head_in, width, rng, dtype))
            self.blocks.append(nn.BatchNorm(width, config.bn_momentum,
                                            config.bn_eps, dtype))
            self.blocks.append(nn.ReLU())
            self.blocks.append(nn.Dropout(config.dropout))
            head_in = width
        self.blocks.append(nn.Linear(head_in, config.num_classes, rng, dtype))
        self.rng = rng
        self.train_losses: list[float] = []
        self.train_time: float = 0.0
        self.trained = False

    # -- parameter plumbing --------------------------------------------------

    def params(self) -> list[np.ndarray]:
        return [p for b in self.blocks for p in b.params()]

    def grads(self) -> list[np.ndarray]:
        return [g for b in self.blocks for g in b.grads()]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "EcoNet":
        return copy.deepcopy(self)

    # -- forward / backward ---------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, padding: str = "valid") -> np.ndarray:
        """Run all blocks on a (N, D, H, W, C) tensor; returns class logits
        with the spatial extent the convolution stack leaves behind."""
        t = x
        for i, b in enumerate(self.blocks):
            if isinstance(b, nn.Conv3d):
                t = b.forward(t, train=train, padding=padding)
            elif isinstance(b, nn.Dropout):
                t = b.forward(t, train=train, rng=self.rng)
            else:
                t = b.forward(t, train=train)
        return t

    def backward(self, dlogits: np.ndarray):
        d = dlogits
        for i in range(len(self.blocks) - 1, -1, -1):
            b = self.blocks[i]
            if i == 0 and isinstance(b, nn.Conv3d):
                # nothing below the first convolution needs its input gradient
                return b.backward(d, need_dx=False)
            d = b.backward(d)
        return d

    def clear_caches(self) -> None:
        """Drop forward-pass activations held for backward."""
        for b in self.blocks:
            b.clear_cache()

    # -- patch-level API -------------------------------------------------------

    def patch_inputs(self, patches: np.ndarray) -> np.ndarray:
        """Map raw (N, E, E, E) intensity patches to the network input tensor."""
        dtype = np.dtype(self.config.dtype)
        if self.bank is not None:
            feats = haar_features(patches.astype(np.float64), self.bank)
            return feats.astype(dtype).reshape(len(patches), 1, 1, 1, -1)
        return patches.astype(dtype)[..., None]

    def patch_logits(self, patches: np.ndarray, train: bool = False) -> np.ndarray:
        out = self.forward(self.patch_inputs(patches), train=train, padding="valid")
        return out.reshape(len(patches), self.config.num_classes)

    def patch_probabilities(self, patches: np.ndarray) -> np.ndarray:
        """Foreground probability per patch, eval mode."""
        return nn.softmax(self.patch_logits(patches, train=False), axis=1)[:, 1]

    # -- (de)serialization -----------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for i, b in enumerate(self.blocks):
            if isinstance(b, (nn.Conv3d, nn.Linear)):
                out[f"b{i}.weight"] = b.weight
                out[f"b{i}.bias"] = b.bias
            elif isinstance(b, nn.BatchNorm):
                out[f"b{i}.gamma"] = b.gamma
                out[f"b{i}.beta"] = b.beta
                out[f"b{i}.running_mean"] = b.running_mean
                out[f"b{i}.running_var"] = b.running_var
        return out

    def load_state_dict(self, d: dict) -> None:
        for i, b in enumerate(self.blocks):
            if isinstance(b, (nn.Conv3d, nn.Linear)):
                b.weight[...] = d[f"b{i}.weight"]
                b.bias[...] = d[f"b{i}.bias"]
            elif isinstance(b, nn.BatchNorm):
                b.gamma[...] = d[f"b{i}.gamma"]
                b.beta[...] = d[f"b{i}.beta"]
                b.running_mean[...] = d[f"b{i}.running_mean"]
                b.running_var[...] = d[f"b{i}.running_var"]


def build_model(cfg: EcoNetConfig) -> EcoNet:
    """Deterministically initialized network for the given configuration."""
    return EcoNet(cfg)


def train_online(v: Volume3D, s: ScribbleSet, cfg: EcoNetConfig,
                 warm: EcoNet | None = None) -> EcoNet:
    """Fit the network to the current scribbles.

    Patches are extracted around every scribbled voxel, the class-balancing
    weights are recomputed from the current scribble counts, and the full
    learning-rate schedule is run for `cfg.epochs` epochs of Adam on the
    weighted loss. With `warm` given, training continues from those weights
    (and batchnorm running statistics) but the optimizer state and schedule
    restart. An epoch is a single full batch unless the patch count exceeds
    `cfg.full_batch_cap`, in which case shuffled minibatches are used.
    """
    t0 = time.perf_counter()
    w_f, w_b = class_weights(s)  # raises if either class is empty
    if warm is not None and \
            warm.config.architecture_signature() != cfg.architecture_signature():
        raise ValueError("warm-start parameters were built for a different architecture")
    model = warm.copy() if warm is not None else build_model(cfg)
    model.config = cfg
    batch = extract_patches(v, s, cfg.patch_edge)
    x = model.patch_inputs(batch.patches)
    labels = batch.labels
    n = len(labels)
    schedule = cfg.schedule()
    adam = nn.init_adam(model.params())
    losses: list[float] = []
    full_batch = n <= cfg.full_batch_cap
    for epoch in range(cfg.epochs):
        lr = schedule.lr_at(epoch)
        if full_batch:
            batches = [(x, labels)]
        else:
            order = model.rng.permutation(n)
            batches = [(x[idx], labels[idx])
                       for idx in (order[i:i + cfg.minibatch_size]
                                   for i in range(0, n, cfg.minibatch_size))]
        epoch_loss = 0.0
        for xb, yb in batches:
            logits = model.forward(xb, train=True).reshape(len(yb), cfg.num_classes)
            loss, dlogits = nn.weighted_softmax_ce(logits, yb, w_f, w_b)
            epoch_loss += loss
            model.backward(dlogits.reshape(len(yb), 1, 1, 1, cfg.num_classes))
            nn.adam_step(model.params(), model.grads(), adam, lr)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"non-finite loss {epoch_loss} at epoch {epoch}")
        losses.append(epoch_loss)
    model.clear_caches()
    model.train_losses = losses
    model.train_time = time.perf_counter() - t0
    model.trained = cfg.epochs > 0 or (warm is not None and warm.trained)
    return model


def infer_likelihood(v: Volume3D, model: EcoNet) -> LikelihoodMap:
    """Per-voxel foreground probability over the whole volume (eval mode)."""
    cfg = model.config
    dtype = np.dtype(cfg.dtype)
    if model.bank is not None:
        feats = haar_feature_volume(v, model.bank).astype(dtype)
        x = feats[None]
    else:
        x = v.data.astype(dtype)[None, ..., None]
    logits = model.forward(x, train=False, padding="same")
    model.clear_caches()
    prob = nn.softmax(logits, axis=-1)[0, ..., 1]
    return LikelihoodMap(dims=v.dims, data=np.ascontiguousarray(prob, dtype=np.float32))


def segment_by_argmax(l: LikelihoodMap) -> np.ndarray:
    """Unregularized decision: foreground where p > 0.5; ties go background."""
    return l.data > 0.5


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_checkpoint(model: EcoNet, path: str, adam: nn.AdamState | None = None) -> None:
    arrays = dict(model.state_dict())
    meta = {
        "format": CHECKPOINT_TAG,
        "config": model.config.to_json(),
        "rng_state": model.rng.bit_generator.state,
        "train_losses": model.train_losses,
        "train_time": model.train_time,
        "trained": model.trained,
    }
    if adam is not None:
        meta["adam"] = {"t": adam.t, "beta1": adam.beta1,
                        "beta2": adam.beta2, "eps": adam.eps}
        for i, (m, vv) in enumerate(zip(adam.m, adam.v)):
            arrays[f"adam.m{i}"] = m
            arrays[f"adam.v{i}"] = vv
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path: str) -> tuple[EcoNet, nn.AdamState | None]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_TAG:
            raise ValueError(f"{path}: not a recognized checkpoint "
                             f"(format tag {meta.get('format')!r})")
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    cfg = EcoNetConfig.from_json(meta["config"])
    model = build_model(cfg)
    model.load_state_dict(arrays)
    model.rng.bit_generator.state = meta["rng_state"]
    model.train_losses = list(meta.get("train_losses", []))
    model.train_time = float(meta.get("train_time", 0.0))
    model.trained = bool(meta.get("trained", False))
    adam = None
    if "adam" in meta:
        a = meta["adam"]
        adam = nn.AdamState(m=[arrays[f"adam.m{i}"] for i in range(len(model.params()))],
                            v=[arrays[f"adam.v{i}"] for i in range(len(model.params()))],
                            t=a["t"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
    return model, adam
