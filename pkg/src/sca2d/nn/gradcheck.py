"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .layers import Dropout


def rel_error(a, b, floor=1e-5):
    # the floor sits above central-difference rounding noise (~1e-10 on an
    # O(1) loss with h=1e-5), so near-zero entries are compared absolutely
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradient_check(net, x, labels, h=1e-5, dropout="identity"):
    """Max relative error between analytic and central-difference parameter
    gradients of the training loss (data term + L2).

    Dropout masks are forced to identity; with ``dropout="random"`` the
    check is skipped and None returned, since a freshly drawn mask makes the
    loss non-deterministic.
    """
    if dropout == "random" and any(isinstance(l, Dropout) and l.rate > 0 for l in net.layers):
        return None
    x = net.check_input(x)
    drops = [l for l in net.layers if isinstance(l, Dropout)]
    saved_state = net.get_weights()
    for d in drops:
        d.frozen = True
    try:
        net.loss_and_grads(x, labels, training=True)
        analytic = [(i, name, g.copy()) for i, name, g in net.gradients()]
        worst = 0.0
        for i, name, g in analytic:
            p = net.layers[i].params[name]
            num = np.empty_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                lp = net.loss(x, labels, training=True)
                p[idx] = old - h
                lm = net.loss(x, labels, training=True)
                p[idx] = old
                num[idx] = (lp - lm) / (2 * h)
            worst = max(worst, float(rel_error(g, num).max()))
        return worst
    finally:
        for d in drops:
            d.frozen = False
        net.set_weights(saved_state)


def layer_gradient_check(layer, x, h=1e-5, seed=0, training=True):
    """Check one built layer's input and parameter gradients against
    central differences of the scalar ``sum(r * layer(x)) + l2`` for a fixed
    random projection ``r``. Returns the max relative error."""
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    out = layer.forward(x, training)
    r = rng.standard_normal(out.shape)
    saved = {k: v.copy() for k, v in layer.state.items()}

    def f():
        val = float(np.sum(r * layer.forward(x, training))) + layer.l2_penalty()
        layer.state.update({k: v.copy() for k, v in saved.items()})
        return val

    layer.forward(x, training)
    dx = layer.backward(r)
    grads = {k: v.copy() for k, v in layer.grads.items()}
    worst = 0.0
    targets = [("input", x, dx)] + [(k, layer.params[k], grads[k]) for k in layer.params]
    for _, arr, g in targets:
        num = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            fp = f()
            arr[idx] = old - h
            fm = f()
            arr[idx] = old
            num[idx] = (fp - fm) / (2 * h)
        worst = max(worst, float(rel_error(g, num).max()))
    layer.state.update(saved)
    return worst
