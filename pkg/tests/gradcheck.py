"""Central finite-difference oracle shared by the unit and acceptance tests.

ReLU and max-pooling are piecewise linear. A finite difference whose
+/-h probe crosses a kink measures a secant, not the derivative, so the
check records the activation pattern (ReLU masks, pooling winners) and
redraws the input batch when any probe changes it.
"""
import numpy as np

from fanet_ids.nn.layers import MaxPool1D, ReLU


class KinkCrossed(Exception):
    pass


def pattern(model):
    out = []
    for layer in model.layers:
        if isinstance(layer, ReLU):
            out.append(layer._mask.copy())
        elif isinstance(layer, MaxPool1D):
            out.append(layer._arg.copy())
    return out


def numeric_grad(loss_fn, params, h=1e-4, guard=None):
    out = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            up = loss_fn()
            if guard:
                guard()
            p[i] = old - h
            down = loss_fn()
            if guard:
                guard()
            p[i] = old
            g[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def relative_error(analytic, numeric):
    a = np.concatenate([x.ravel() for x in analytic])
    n = np.concatenate([x.ravel() for x in numeric])
    denom = max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def check_model(model, draw, batch=6, max_redraws=50):
    """``(relative error, redraws)`` for one random batch from ``draw``."""
    from fanet_ids.nn import loss_and_grad
    for redraw in range(max_redraws):
        X = draw.normal(size=(batch, model.input_dim))
        y = (draw.random(batch) < 0.5).astype(float)
        _, analytic = loss_and_grad(model, X, y)
        base = pattern(model)

        def guard():
            if any(not np.array_equal(a, b) for a, b in zip(base, pattern(model))):
                raise KinkCrossed

        try:
            numeric = numeric_grad(lambda: loss_and_grad(model, X, y)[0], model.parameters(), guard=guard)
        except KinkCrossed:
            continue
        return relative_error(analytic, numeric), redraw
    raise RuntimeError("every batch straddled a kink")
