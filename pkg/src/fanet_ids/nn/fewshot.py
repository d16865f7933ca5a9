"""Pairwise-distance few-shot head.

Two rows are embedded by the classifier body, their squared Euclidean
distance is fed through a one-unit fully connected layer and a sigmoid to
give the probability that they belong to the same class.
"""
import numpy as np

from .models import EPS, bce, sigmoid


def pairwise_distance(emb_i, emb_j):
    a = np.asarray(emb_i, dtype=float)
    b = np.asarray(emb_j, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"embedding sizes differ: {a.shape[-1]} vs {b.shape[-1]}")
    d = a - b
    return (d * d).sum(axis=-1)


def pair_probability(model_body, fc_head, x_i, x_j):
    """Same-class probability. ``model_body`` maps rows to embeddings
    (a :class:`Sequential` or any callable); ``fc_head`` is ``(w, b)``."""
    embed = model_body.embed if hasattr(model_body, "embed") else model_body
    xi = np.atleast_2d(np.asarray(x_i, dtype=float))
    xj = np.atleast_2d(np.asarray(x_j, dtype=float))
    w, b = (float(v) for v in np.ravel(fc_head))
    return sigmoid(w * pairwise_distance(embed(xi), embed(xj)) + b)


class PairwiseModel:
    """Classifier body plus a scalar distance head.

    The body's own output unit is not used; its WeightSet is the body
    tensors followed by the head weight and bias.
    """

    def __init__(self, body):
        self.body = body
        self.head_w = np.zeros(1)
        self.head_b = np.zeros(1)
        self.arch = dict(body.arch, head="pairwise")

    @property
    def input_dim(self):
        return self.body.input_dim

    def parameters(self):
        return self.body.parameters()[:-2] + [self.head_w, self.head_b]

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

    def pair_probability(self, xi, xj):
        return pair_probability(self.body, (self.head_w[0], self.head_b[0]), xi, xj)

    def loss_and_grad(self, xi, xj, same, dropout_enabled=False, rng=None):
        n = len(same)
        y = np.asarray(same, dtype=float)
        emb = self.body.embed(np.concatenate([xi, xj]), dropout_enabled, rng)
        ei, ej = emb[:n], emb[n:]
        diff = ei - ej
        D = (diff * diff).sum(axis=1)
        p = sigmoid(self.head_w[0] * D + self.head_b[0])
        loss = bce(p, y)
        inside = (p > EPS) & (p < 1.0 - EPS)
        dz = np.where(inside, (p - y) / n, 0.0)
        g_w = np.array([np.sum(dz * D)])
        g_b = np.array([np.sum(dz)])
        dD = dz * self.head_w[0]
        dei = 2.0 * diff * dD[:, None]
        grads = self.body.backward_from_embedding(np.concatenate([dei, -dei]))
        return loss, grads + [g_w, g_b]

    def make_pairs(self, y, rng):
        """One partner per anchor: same class or the other with equal odds."""
        y = np.asarray(y)
        by_class = {c: np.flatnonzero(y == c) for c in np.unique(y)}
        anchors = rng.permutation(len(y))
        partners = np.empty_like(anchors)
        for k, i in enumerate(anchors):
            want_same = rng.random() < 0.5 or len(by_class) == 1
            pool = by_class[y[i]] if want_same else np.concatenate(
                [v for c, v in by_class.items() if c != y[i]])
            partners[k] = pool[rng.integers(len(pool))]
        return anchors, partners

    def pair_epoch(self, trainer, X, y):
        anchors, partners = self.make_pairs(y, trainer.rng)
        same = (y[anchors] == y[partners]).astype(float)
        bs = trainer.config.batch_size
        total = 0.0
        for s in range(0, len(anchors), bs):
            a, b = anchors[s:s + bs], partners[s:s + bs]
            loss = trainer.step(self.loss_and_grad(X[a], X[b], same[s:s + bs], trainer.config.dropout_enabled,
                                                   trainer.rng))
            total += loss * len(a)
        return total / len(anchors)

    def predict_proba(self, Xq, X_support, y_support):
        """Score for class 1: mean same-probability against each class's support."""
        Xq = np.asarray(Xq, dtype=float)
        eq = self.body.embed(Xq)
        es = self.body.embed(np.asarray(X_support, dtype=float))
        ys = np.asarray(y_support)
        scores = []
        for c in (0, 1):
            ec = es[ys == c]
            if len(ec) == 0:
                scores.append(np.zeros(len(Xq)))
                continue
            D = pairwise_distance(eq[:, None, :], ec[None, :, :])
            scores.append(sigmoid(self.head_w[0] * D + self.head_b[0]).mean(axis=1))
        s0, s1 = scores
        tot = s0 + s1
        return np.where(tot > 0, s1 / np.where(tot > 0, tot, 1.0), 0.5)
