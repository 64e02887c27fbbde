from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr=0.0002, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update of ``params`` (a dict of arrays) in place.

    ``state`` carries the moment estimates keyed like ``params``.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for key, p in params.items():
        g = grads[key]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


class Adam:
    def __init__(self, lr=0.0002, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, net):
        params = {(i, name): arr for i, name, arr in net.parameters()}
        grads = {(i, name): net.layers[i].grads[name] for i, name in params}
        adam_step(params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
