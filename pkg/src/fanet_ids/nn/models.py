"""The two classifier architectures and the probability/gradient helpers."""
import numpy as np

from .layers import Conv1D, Dense, Dropout, Flatten, MaxPool1D, ReLU, Reshape

EPS = 1e-7


def sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


class Sequential:
    """A stack of layers ending in one logit unit.

    ``weights`` is the flat ordered WeightSet (list of arrays) that FedAvg
    averages; ``arch`` describes the shapes.
    """

    def __init__(self, layers, arch):
        self.layers = layers
        self.arch = dict(arch)

    @property
    def input_dim(self):
        return self.arch["input_dim"]

    def parameters(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def weights(self):
        return [p.copy() for p in self.parameters()]

    def set_weights(self, weights):
        params = self.parameters()
        if len(weights) != len(params):
            raise ValueError(f"expected {len(params)} tensors, got {len(weights)}")
        for p, w in zip(params, weights):
            if p.shape != np.shape(w):
                raise ValueError(f"shape mismatch {p.shape} vs {np.shape(w)}")
            p[...] = w

    def shapes(self):
        return [p.shape for p in self.parameters()]

    def n_params(self):
        return int(sum(p.size for p in self.parameters()))

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(f"expected batch of width {self.input_dim}, got shape {x.shape}")
        return x

    def embed(self, x, training=False, rng=None):
        """Forward through everything but the output unit."""
        h = self._check(x)
        for layer in self.layers[:-1]:
            h = layer.forward(h, training, rng)
        return h

    def logits(self, x, training=False, rng=None):
        return self.layers[-1].forward(self.embed(x, training, rng), training, rng)[:, 0]

    def backward_from_embedding(self, grad, skip_head=True):
        grads = []
        layers = self.layers[:-1] if skip_head else self.layers
        for layer in reversed(layers):
            grad, g = layer.backward(grad)
            grads = g + grads
        return grads


def build_mlp(input_dim=31, hidden_units=10, hidden_layers=2, seed=0, rng=None):
    rng = rng if rng is not None else np.random.default_rng(seed)
    layers = []
    n_in = input_dim
    for _ in range(hidden_layers):
        layers += [Dense(n_in, hidden_units, rng), ReLU()]
        n_in = hidden_units
    layers.append(Dense(n_in, 1, rng))
    return Sequential(layers, {"kind": "mlp", "input_dim": input_dim, "hidden_units": hidden_units,
                               "hidden_layers": hidden_layers})


def build_cnn(input_dim=31, filters=9, kernel_size=3, pool_size=2, dropout=0.2, dense_units=6, seed=0, rng=None):
    rng = rng if rng is not None else np.random.default_rng(seed)
    conv_len = input_dim - kernel_size + 1
    pooled = conv_len // pool_size
    if pooled < 1:
        raise ValueError("input too short for the convolution/pooling stack")
    layers = [
        Reshape(),
        Conv1D(1, filters, kernel_size, rng), ReLU(),
        MaxPool1D(pool_size),
        Dropout(dropout),
        Flatten(),
        Dense(pooled * filters, dense_units, rng), ReLU(),
        Dense(dense_units, 1, rng),
    ]
    return Sequential(layers, {"kind": "cnn", "input_dim": input_dim, "filters": filters,
                               "kernel_size": kernel_size, "pool_size": pool_size, "dropout": dropout,
                               "dense_units": dense_units})


def build_model(kind, seed=0, rng=None, **kw):
    kind = kind.lower()
    if kind in ("dnn", "mlp"):
        return build_mlp(seed=seed, rng=rng, **kw)
    if kind == "cnn":
        return build_cnn(seed=seed, rng=rng, **kw)
    raise ValueError(f"unknown model kind {kind!r}")


def from_arch(arch, seed=0):
    arch = dict(arch)
    kind = arch.pop("kind")
    return build_model(kind, seed=seed, **arch)


def forward(model, batch, dropout_enabled=False, rng=None):
    """Sigmoid probabilities for a batch of scaled rows."""
    return sigmoid(model.logits(batch, training=dropout_enabled, rng=rng))


def bce(p, y):
    pc = np.clip(p, EPS, 1.0 - EPS)
    return float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def loss_and_grad(model, batch, labels, dropout_enabled=False, rng=None):
    """Mean clipped binary cross-entropy and its exact gradient.

    Where the probability sits outside ``[EPS, 1 - EPS]`` the clip is active
    and the gradient contribution is zero.
    """
    y = np.asarray(labels, dtype=float)
    z = model.logits(batch, training=dropout_enabled, rng=rng)
    p = sigmoid(z)
    loss = bce(p, y)
    inside = (p > EPS) & (p < 1.0 - EPS)
    dz = np.where(inside, (p - y) / len(y), 0.0)
    head = model.layers[-1]
    dh, head_grads = head.backward(dz[:, None])
    grads = model.backward_from_embedding(dh) + head_grads
    return loss, grads


def grad(model, batch, labels, dropout_enabled=False, rng=None):
    return loss_and_grad(model, batch, labels, dropout_enabled, rng)[1]
