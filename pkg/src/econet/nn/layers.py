"""Dense layers with manual forward/backward passes on numpy arrays.

Array convention: channels last. Patch batches are (N, D, H, W, C); full
volumes during fully-convolutional inference are (D, H, W, C) reshaped to
(1, D, H, W, C). All layers preserve the input dtype, so the same code runs
float32 for speed and float64 for finite-difference checks.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DegenerateBatchError(Exception):
    """Batch statistics cannot be estimated from a single sample."""


# im2col matrices wider than this fall back to offset accumulation; larger
# than the byte budget they are processed in slabs instead of materialized
_COL_MAX_WIDTH = 4096
_COL_BUDGET_BYTES = 1_600_000_000
_COL_CHUNK_ELEMS = 8_000_000


def replicate_pad(x: np.ndarray, r: int) -> np.ndarray:
    """Edge-replicate the three spatial axes of (N, D, H, W, C) by r."""
    if r == 0:
        return x
    return np.pad(x, ((0, 0), (r, r), (r, r), (r, r), (0, 0)), mode="edge")


def he_uniform(shape, fan_in, rng, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv3d:
    """3-D convolution, weight layout (K, K, K, Cin, Cout).

    `valid` mode supports backward (the training path always uses it);
    `same` mode pads by edge replication and is inference-only. When the
    input is one exact window the convolution collapses to a dense layer on
    the flattened patch. Otherwise the forward pass materializes the im2col
    matrix when it fits the byte budget; because full-batch training feeds
    the same input every epoch, that matrix is also memoized across calls.
    """

    def __init__(self, in_channels, out_channels, kernel_size, rng, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.K = int(kernel_size)
        fan_in = self.K ** 3 * in_channels
        self.weight = he_uniform((self.K,) * 3 + (in_channels, out_channels),
                                 fan_in, rng, dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = None
        self._col = None
        self._memo_x = None
        self._memo_col = None

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.dweight, self.dbias]

    def forward(self, x, train=False, padding="valid"):
        if x.shape[-1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[-1]}")
        if padding == "same":
            if train:
                raise ValueError("same-padding is inference-only")
            x = replicate_pad(x, self.K // 2)
        elif padding != "valid":
            raise ValueError(f"unknown padding {padding!r}")
        K = self.K
        N, D, H, W, C = x.shape
        if D < K or H < K or W < K:
            raise ValueError(f"kernel {K} larger than input {x.shape[1:4]}")
        Do, Ho, Wo = D - K + 1, H - K + 1, W - K + 1
        F = self.out_channels
        wmat = self.weight.reshape(-1, F)
        width = K * K * K * C
        self._x = x
        self._col = None
        if (Do, Ho, Wo) == (1, 1, 1):
            col = x.reshape(N, width)
            self._col = col
            return (col @ wmat + self.bias).reshape(N, 1, 1, 1, F)
        if width <= _COL_MAX_WIDTH:
            rows = N * Do * Ho * Wo
            if rows * width * x.itemsize <= _COL_BUDGET_BYTES:
                # identity check; the kept reference stops id reuse on dead arrays
                if train and x is self._memo_x:
                    col = self._memo_col
                else:
                    col = _build_col(x, K)
                    if train:
                        self._memo_x, self._memo_col = x, col
                self._col = col
                return (col @ wmat + self.bias).reshape(N, Do, Ho, Wo, F)
            return _conv3d_slabs(x, wmat, self.bias, K, F)
        return _conv3d_offsets(x, self.weight, self.bias)

    def backward(self, dy, need_dx=True):
        x, self._x = self._x, None
        col, self._col = self._col, None
        if x is None:
            raise RuntimeError("backward called before forward")
        K, C, F = self.K, self.in_channels, self.out_channels
        N = x.shape[0]
        Do, Ho, Wo = dy.shape[1:4]
        wmat = self.weight.reshape(-1, F)
        dym = dy.reshape(-1, F)
        self.dbias = dym.sum(axis=0)
        if col is not None:
            self.dweight = (col.T @ dym).reshape(self.weight.shape)
            if not need_dx:
                return None
            dcol = dym @ wmat.T
            if (Do, Ho, Wo) == (1, 1, 1):
                return dcol.reshape(x.shape)
            return _col2im(dcol, x.shape, K)
        # offset fallback for kernels too wide to materialize columns
        dx = np.zeros_like(x) if need_dx else None
        dw = np.zeros_like(self.weight)
        for i in range(K):
            for j in range(K):
                for k in range(K):
                    xs = np.ascontiguousarray(
                        x[:, i:i + Do, j:j + Ho, k:k + Wo, :]).reshape(-1, C)
                    dw[i, j, k] = xs.T @ dym
                    if need_dx:
                        dx[:, i:i + Do, j:j + Ho, k:k + Wo, :] += (
                            dym @ self.weight[i, j, k].T).reshape(N, Do, Ho, Wo, C)
        self.dweight = dw
        return dx

    def clear_cache(self):
        self._x = None
        self._col = None
        self._memo_x = None
        self._memo_col = None


def _build_col(x, K):
    """im2col: rows ordered (n, dx, dy, dz), columns ordered (kx, ky, kz, c)."""
    N, D, H, W, C = x.shape
    win = sliding_window_view(x, (K, K, K), axis=(1, 2, 3))
    return np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 6, 7, 4)).reshape(
        -1, K * K * K * C)


def _col2im(dcol, x_shape, K):
    """Scatter-add column gradients back onto the input layout."""
    N, D, H, W, C = x_shape
    Do, Ho, Wo = D - K + 1, H - K + 1, W - K + 1
    dx = np.zeros(x_shape, dtype=dcol.dtype)
    dcol = dcol.reshape(N, Do, Ho, Wo, K, K, K, C)
    for i in range(K):
        for j in range(K):
            for k in range(K):
                dx[:, i:i + Do, j:j + Ho, k:k + Wo, :] += dcol[:, :, :, :, i, j, k, :]
    return dx


def _conv3d_slabs(x, wmat, bias, K, F):
    """Chunked im2col for inputs whose full column matrix would be too big."""
    N, D, H, W, C = x.shape
    Do, Ho, Wo = D - K + 1, H - K + 1, W - K + 1
    out = np.empty((N, Do, Ho, Wo, F), dtype=x.dtype)
    slab = max(1, _COL_CHUNK_ELEMS // max(1, Ho * Wo * K * K * K * C))
    for n in range(N):
        for d0 in range(0, Do, slab):
            d1 = min(Do, d0 + slab)
            win = sliding_window_view(x[n, d0:d1 + K - 1], (K, K, K), axis=(0, 1, 2))
            col = win.transpose(0, 1, 2, 4, 5, 6, 3).reshape(-1, K * K * K * C)
            out[n, d0:d1] = (col @ wmat).reshape(d1 - d0, Ho, Wo, F)
    out += bias
    return out


def _conv3d_offsets(x, w, bias):
    """Accumulate one kernel offset at a time; used for wide deep kernels."""
    N, D, H, W, C = x.shape
    K = w.shape[0]
    F = w.shape[4]
    Do, Ho, Wo = D - K + 1, H - K + 1, W - K + 1
    out = np.zeros((N, Do, Ho, Wo, F), dtype=x.dtype)
    of = out.reshape(-1, F)
    for i in range(K):
        for j in range(K):
            for k in range(K):
                xs = np.ascontiguousarray(
                    x[:, i:i + Do, j:j + Ho, k:k + Wo, :]).reshape(-1, C)
                of += xs @ w[i, j, k]
    out += bias
    return out


class BatchNorm:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by the current batch (statistics pooled over the
    batch and any spatial axes) and updates the running estimates with
    `momentum`; eval mode applies the running estimates. Running variance
    uses the unbiased estimator.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=dtype)
        self.beta = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def params(self):
        return [self.gamma, self.beta]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def forward(self, x, train=False):
        c = x.shape[-1]
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        xf = x.reshape(-1, c)
        if train:
            m = xf.shape[0]
            if m < 2:
                raise DegenerateBatchError(
                    "batch normalization needs at least 2 samples per channel")
            mean = xf.mean(axis=0, dtype=np.float64)
            sumsq = np.einsum("nc,nc->c", xf, xf, dtype=np.float64)
            var = np.maximum(sumsq / m - mean * mean, 0.0)
            invstd = (1.0 / np.sqrt(var + self.eps)).astype(x.dtype)
            mean = mean.astype(x.dtype)
            xhat = xf - mean
            xhat *= invstd
            mom = self.momentum
            self.running_mean += (mom * (mean - self.running_mean)).astype(self.running_mean.dtype)
            unbiased = var * m / (m - 1)
            self.running_var += (mom * (unbiased - self.running_var)).astype(self.running_var.dtype)
            self._cache = ("train", xhat, invstd)
            out = xhat * self.gamma
            out += self.beta
        else:
            invstd = (1.0 / np.sqrt(self.running_var + self.eps)).astype(x.dtype)
            scale = self.gamma * invstd
            out = xf * scale
            out += self.beta - self.running_mean * scale
            self._cache = ("eval", xf, invstd)
        return out.reshape(x.shape)

    def backward(self, dy):
        mode, cached, invstd = self._cache
        self._cache = None
        c = dy.shape[-1]
        dyf = dy.reshape(-1, c)
        if mode == "eval":
            # running statistics are constants; gamma/beta still get gradients
            xhat = (cached - self.running_mean) * invstd
            self.dgamma = np.einsum("nc,nc->c", dyf, xhat).astype(self.gamma.dtype)
            self.dbeta = dyf.sum(axis=0).astype(self.beta.dtype)
            dx = dyf * (self.gamma * invstd)
            return dx.reshape(dy.shape)
        xhat = cached
        m = dyf.shape[0]
        self.dgamma = np.einsum("nc,nc->c", dyf, xhat).astype(self.gamma.dtype)
        self.dbeta = dyf.sum(axis=0).astype(self.beta.dtype)
        # dx = a*dy - (a/m)*dgamma*xhat - (a/m)*dbeta, with a = gamma*invstd
        a = (self.gamma * invstd).astype(dy.dtype)
        dx = dyf * a
        xhat *= a * (self.dgamma.astype(dy.dtype) / m)  # xhat is dead after this
        dx -= xhat
        dx -= a * (self.dbeta.astype(dy.dtype) / m)
        return dx.reshape(dy.shape)

    def clear_cache(self):
        self._cache = None


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x, train=False):
        self._mask = x > 0
        # safe in place: upstream layers cache their own buffers, not this one
        return np.maximum(x, 0, out=x)

    def backward(self, dy):
        mask, self._mask = self._mask, None
        dy *= mask
        return dy

    def clear_cache(self):
        self._mask = None


class Dropout:
    """Inverted dropout: survivors are scaled at train time, eval is identity."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._mask = None

    def params(self):
        return []

    def grads(self):
        return []

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an RNG")
        keep = (rng.random(x.shape) >= self.rate)
        scale = 1.0 / (1.0 - self.rate)
        self._mask = keep * np.asarray(scale, dtype=x.dtype)
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        mask, self._mask = self._mask, None
        return dy * mask

    def clear_cache(self):
        self._mask = None


class Linear:
    """Dense layer applied to the trailing axis of an arbitrary-rank input.

    Because it acts voxel-wise, the same layer serves both the per-patch
    classifier head and the 1x1x1-convolution role during full-volume
    inference.
    """

    def __init__(self, in_features, out_features, rng, dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = he_uniform((in_features, out_features), in_features, rng, dtype)
        self.bias = np.zeros(out_features, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def grads(self):
        return [self.dweight, self.dbias]

    def forward(self, x, train=False):
        if x.shape[-1] != self.in_features:
            raise ValueError(
                f"expected {self.in_features} input features, got {x.shape[-1]}")
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dy):
        x, self._x = self._x, None
        xf = x.reshape(-1, self.in_features)
        dyf = dy.reshape(-1, self.out_features)
        self.dweight = xf.T @ dyf
        self.dbias = dyf.sum(axis=0)
        return (dyf @ self.weight.T).reshape(x.shape)

    def clear_cache(self):
        self._x = None
