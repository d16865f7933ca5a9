"""Layers with explicit forward caches and analytic backward passes.

Tensors are ``(batch, length, channels)`` for the convolutional path and
``(batch, features)`` for dense layers.
"""
import numpy as np


class Layer:
    params = ()

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad):
        """Return ``(grad wrt input, [grads wrt params])``."""
        raise NotImplementedError


def glorot_uniform(rng, fan_in, fan_out, shape):
    """Uniform on +/- sqrt(6 / (fan_in + fan_out)), as Keras initialises kernels."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng):
        self.W = glorot_uniform(rng, n_in, n_out, (n_in, n_out))
        self.b = np.zeros(n_out)

    @property
    def params(self):
        return (self.W, self.b)

    def forward(self, x, training=False, rng=None):
        self._x = x
        return x @ self.W + self.b

    def backward(self, grad):
        return grad @ self.W.T, [self._x.T @ grad, grad.sum(axis=0)]


class ReLU(Layer):
    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return grad * self._mask, []


class Conv1D(Layer):
    """Valid-padding 1-D convolution, stride 1."""

    def __init__(self, in_channels, filters, kernel_size, rng):
        self.k = kernel_size
        self.W = glorot_uniform(rng, kernel_size * in_channels, kernel_size * filters,
                                (kernel_size * in_channels, filters))
        self.b = np.zeros(filters)

    @property
    def params(self):
        return (self.W, self.b)

    def forward(self, x, training=False, rng=None):
        B, L, C = x.shape
        out_len = L - self.k + 1
        cols = np.concatenate([x[:, i:i + out_len, :] for i in range(self.k)], axis=2)
        self._cols = cols
        self._shape = x.shape
        return cols @ self.W + self.b

    def backward(self, grad):
        B, L, C = self._shape
        out_len = L - self.k + 1
        dW = np.einsum("blk,blf->kf", self._cols, grad)
        db = grad.sum(axis=(0, 1))
        dcols = grad @ self.W.T
        dx = np.zeros(self._shape)
        for i in range(self.k):
            dx[:, i:i + out_len, :] += dcols[:, :, i * C:(i + 1) * C]
        return dx, [dW, db]


class MaxPool1D(Layer):
    """Non-overlapping max pooling; a ragged tail is dropped (29 -> 14)."""

    def __init__(self, pool_size=2):
        self.p = pool_size

    def forward(self, x, training=False, rng=None):
        B, L, C = x.shape
        n = L // self.p
        win = x[:, :n * self.p, :].reshape(B, n, self.p, C)
        arg = win.argmax(axis=2)
        self._arg = arg
        self._shape = x.shape
        return np.take_along_axis(win, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, grad):
        B, L, C = self._shape
        n = L // self.p
        dwin = np.zeros((B, n, self.p, C))
        np.put_along_axis(dwin, self._arg[:, :, None, :], grad[:, :, None, :], axis=2)
        dx = np.zeros(self._shape)
        dx[:, :n * self.p, :] = dwin.reshape(B, n * self.p, C)
        return dx, []


class Dropout(Layer):
    """Inverted dropout: active only when training with an rng."""

    def __init__(self, rate):
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad, []
        return grad * self._mask, []


class Flatten(Layer):
    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape), []


class Reshape(Layer):
    """``(B, F)`` -> ``(B, F, 1)`` so tabular rows feed the convolution."""

    def forward(self, x, training=False, rng=None):
        return x[:, :, None]

    def backward(self, grad):
        return grad[:, :, 0], []
