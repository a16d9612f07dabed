"""Forward/backward passes for the supported layer kinds, in float64 numpy.

Data layout is channels-last: activations are ``(batch, height, width,
channels)``.  Each layer caches what its backward pass needs; ``backward``
consumes the cache of the immediately preceding ``forward`` call.  Weight
initialization is fan-in-scaled uniform ``U(-sqrt(3/fan_in), sqrt(3/fan_in))``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from ..phenotype import LayerKind, LayerSpec

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def _fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base layer: parameter-free, shape-preserving identity."""

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, training: bool, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv(Layer):
    """3x3 or 5x5 convolution, stride 1, zero-padded to preserve h/w."""

    def __init__(self, c_in: int, filters: int, kernel: int):
        self.c_in = c_in
        self.filters = filters
        self.kernel = kernel
        self.w = np.zeros((kernel, kernel, c_in, filters))
        self.b = np.zeros(filters)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def init_params(self, rng):
        fan_in = self.kernel * self.kernel * self.c_in
        self.w = _fan_in_uniform(rng, self.w.shape, fan_in)
        self.b = np.zeros(self.filters)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    @staticmethod
    def _im2col(x: np.ndarray, k: int) -> np.ndarray:
        """Stack the k*k shifted views of the zero-padded input so that row
        (n, y, x) holds the window feeding output pixel (y, x)."""
        n, h, w, c = x.shape
        pad = k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        cols = np.empty((n, h, w, k * k, c))
        for i in range(k):
            for j in range(k):
                cols[:, :, :, i * k + j, :] = xp[:, i : i + h, j : j + w, :]
        return cols.reshape(n * h * w, k * k * c)

    def forward(self, x, training, rng=None):
        n, h, w, c = x.shape
        if c != self.c_in:
            raise ShapeError(f"conv expected {self.c_in} input channels, got {c}")
        cols = self._im2col(x, self.kernel)
        wmat = self.w.reshape(-1, self.filters)
        out = cols @ wmat + self.b
        self._cache = (cols, x.shape)
        return out.reshape(n, h, w, self.filters)

    def backward(self, dout, need_dx: bool = True):
        cols, x_shape = self._cache
        n, h, w, _ = x_shape
        dmat = dout.reshape(n * h * w, self.filters)
        self.dw = (cols.T @ dmat).reshape(self.w.shape)
        self.db = dmat.sum(axis=0)
        if not need_dx:
            return None
        # dx = correlation of dout with the spatially flipped, channel-swapped kernel
        wflip = self.w[::-1, ::-1].transpose(0, 1, 3, 2)  # (k, k, filters, c_in)
        dcols = self._im2col(dout, self.kernel)
        dx = dcols @ np.ascontiguousarray(wflip).reshape(-1, self.c_in)
        return dx.reshape(n, h, w, self.c_in)


class _Pool(Layer):
    """2x2 window, stride 2; odd trailing rows/columns are cropped."""

    def _crop(self, x):
        n, h, w, c = x.shape
        if h < 2 or w < 2:
            raise ShapeError(f"cannot pool a {h}x{w} map")
        h2, w2 = h // 2, w // 2
        return x[:, : h2 * 2, : w2 * 2, :], h2, w2

    def _windows(self, x):
        xc, h2, w2 = self._crop(x)
        quads = np.stack(
            (
                xc[:, 0::2, 0::2, :],
                xc[:, 0::2, 1::2, :],
                xc[:, 1::2, 0::2, :],
                xc[:, 1::2, 1::2, :],
            ),
            axis=-1,
        )
        return quads, h2, w2

    def _scatter(self, dwin, x_shape, h2, w2):
        dx = np.zeros(x_shape)
        dx[:, 0 : h2 * 2 : 2, 0 : w2 * 2 : 2, :] = dwin[..., 0]
        dx[:, 0 : h2 * 2 : 2, 1 : w2 * 2 : 2, :] = dwin[..., 1]
        dx[:, 1 : h2 * 2 : 2, 0 : w2 * 2 : 2, :] = dwin[..., 2]
        dx[:, 1 : h2 * 2 : 2, 1 : w2 * 2 : 2, :] = dwin[..., 3]
        return dx


class MaxPool(_Pool):
    def forward(self, x, training, rng=None):
        win, h2, w2 = self._windows(x)
        idx = win.argmax(axis=-1)  # first maximum wins on ties
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape, h2, w2)
        return out

    def backward(self, dout):
        idx, x_shape, h2, w2 = self._cache
        dwin = np.zeros((*idx.shape, 4))
        np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
        return self._scatter(dwin, x_shape, h2, w2)


class AvgPool(_Pool):
    def forward(self, x, training, rng=None):
        win, h2, w2 = self._windows(x)
        self._cache = (x.shape, h2, w2)
        return win.mean(axis=-1)

    def backward(self, dout):
        x_shape, h2, w2 = self._cache
        dwin = np.repeat(dout[..., None] / 4.0, 4, axis=-1)
        return self._scatter(dwin, x_shape, h2, w2)


class BatchNorm(Layer):
    """Per-channel normalisation: batch statistics while training, running
    averages at inference."""

    def __init__(self, channels: int):
        self.channels = channels
        self.gamma = np.ones(channels)
        self.beta = np.zeros(channels)
        self.dgamma = np.zeros(channels)
        self.dbeta = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def forward(self, x, training, rng=None):
        axes = (0, 1, 2)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = BN_MOMENTUM * self.running_mean + (1 - BN_MOMENTUM) * mean
            self.running_var = BN_MOMENTUM * self.running_var + (1 - BN_MOMENTUM) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, x.shape)
        return self.gamma * xhat + self.beta

    def backward(self, dout):
        xhat, inv_std, x_shape = self._cache
        axes = (0, 1, 2)
        m = x_shape[0] * x_shape[1] * x_shape[2]
        self.dgamma = (dout * xhat).sum(axis=axes)
        self.dbeta = dout.sum(axis=axes)
        dxhat = dout * self.gamma
        # gradient through the batch mean and variance
        dx = (inv_std / m) * (
            m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )
        return dx


class Dropout(Layer):
    """Inverted dropout; active only in training mode."""

    def __init__(self, rate: float):
        self.rate = rate
        self._mask = None

    def forward(self, x, training, rng=None):
        if not training or rng is None:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        if self._mask is None:
            return dout
        return dout * self._mask


class DenseOutput(Layer):
    """Flatten followed by an affine map to class logits."""

    def __init__(self, in_shape: tuple[int, int, int], num_classes: int):
        self.in_shape = in_shape
        d = int(np.prod(in_shape))
        self.w = np.zeros((d, num_classes))
        self.b = np.zeros(num_classes)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def init_params(self, rng):
        self.w = _fan_in_uniform(rng, self.w.shape, self.w.shape[0])
        self.b = np.zeros_like(self.b)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}

    def forward(self, x, training, rng=None):
        n = x.shape[0]
        flat = x.reshape(n, -1)
        if flat.shape[1] != self.w.shape[0]:
            raise ShapeError(
                f"dense layer expected {self.w.shape[0]} features, got {flat.shape[1]}"
            )
        self._cache = (flat, x.shape)
        return flat @ self.w + self.b

    def backward(self, dout):
        flat, x_shape = self._cache
        self.dw = flat.T @ dout
        self.db = dout.sum(axis=0)
        return (dout @ self.w.T).reshape(x_shape)


def build_layer(spec: LayerSpec, in_shape: tuple[int, int, int], num_classes: int) -> Layer:
    if spec.kind == LayerKind.CONV:
        return Conv(in_shape[2], spec.filters, spec.kernel)
    if spec.kind == LayerKind.MAX_POOL:
        return MaxPool()
    if spec.kind == LayerKind.AVG_POOL:
        return AvgPool()
    if spec.kind == LayerKind.BATCH_NORM:
        return BatchNorm(in_shape[2])
    if spec.kind == LayerKind.DROPOUT:
        return Dropout(spec.rate)
    return DenseOutput(in_shape, num_classes)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), labels].mean()
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), labels] -= 1.0
    return float(loss), dlogits / n
