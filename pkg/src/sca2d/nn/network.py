from __future__ import annotations

import numpy as np

from .layers import (BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool, ReLU, Softmax,
                     layer_from_spec)

PROB_FLOOR = 1e-300


class Network:
    """Ordered stack of layers with a fixed input shape ``(H, W, C)``."""

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Softmax) and i != len(self.layers) - 1:
                raise ValueError("softmax may only be the last layer")
        self.built = False

    def build(self, seed=0):
        """Initialize weights. Dropout layers get their own seeded streams."""
        init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(init_ss)
        drop_seeds = drop_ss.spawn(len(self.layers))
        shape = self.input_shape
        for layer, ss in zip(self.layers, drop_seeds):
            shape = layer.build(shape, rng)
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(ss)
        for i, layer in enumerate(self.layers):
            layer.needs_input_grad = i > 0
        self.output_shape = shape
        self.built = True
        return self

    @property
    def ends_in_softmax(self):
        return bool(self.layers) and isinstance(self.layers[-1], Softmax)

    def check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == len(self.input_shape):
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match network input "
                             f"{self.input_shape}")
        return x

    def forward(self, x, training=False, upto=None):
        layers = self.layers if upto is None else self.layers[:upto]
        for layer in layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dout, start=None):
        layers = self.layers if start is None else self.layers[:start]
        for layer in reversed(layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        """``(layer_index, name, array)`` for every trainable array."""
        return [(i, name, arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.params.items()]

    def gradients(self):
        return [(i, name, self.layers[i].grads[name]) for i, name, _ in self.parameters()]

    def l2_penalty(self):
        return sum(layer.l2_penalty() for layer in self.layers)

    def n_parameters(self):
        return sum(arr.size for _, _, arr in self.parameters())

    def loss_and_grads(self, x, labels, training=True):
        """Forward + backward on one batch; returns the loss (data + L2).

        With a terminal softmax the gradient enters at the logits as
        ``(p - onehot) / B``.
        """
        labels = np.asarray(labels, dtype=np.int64)
        if self.ends_in_softmax:
            logits = self.forward(x, training, upto=len(self.layers) - 1)
            p = self.layers[-1].forward(logits, training)
            loss = cross_entropy_loss(p, labels, self.l2_penalty())
            d = p.copy()
            d[np.arange(len(labels)), labels] -= 1.0
            self.backward(d / len(labels), start=len(self.layers) - 1)
        else:
            p = self.forward(x, training)
            loss = cross_entropy_loss(p, labels, self.l2_penalty())
            d = np.zeros_like(p)
            picked = np.maximum(p[np.arange(len(labels)), labels], PROB_FLOOR)
            d[np.arange(len(labels)), labels] = -1.0 / (len(labels) * picked)
            self.backward(d)
        return loss

    def loss(self, x, labels, training=False):
        return cross_entropy_loss(self.forward(x, training), labels, self.l2_penalty())

    def predict_proba(self, images, batch_size=512):
        x = self.check_input(images)
        out = [self.forward(x[i:i + batch_size], training=False)
               for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def spec(self):
        return [layer.spec() for layer in self.layers]

    def state_arrays(self):
        """All checkpointed arrays in declaration order."""
        return [(i, name, arr) for i, layer in enumerate(self.layers)
                for name, arr in layer.arrays().items()]

    def get_weights(self):
        return [{**{k: v.copy() for k, v in layer.params.items()},
                 **{k: v.copy() for k, v in layer.state.items()}} for layer in self.layers]

    def set_weights(self, weights):
        for layer, w in zip(self.layers, weights):
            for k in layer.params:
                layer.params[k] = w[k].copy()
            for k in layer.state:
                layer.state[k] = w[k].copy()

    @classmethod
    def from_spec(cls, spec, input_shape):
        return cls([layer_from_spec(s) for s in spec], input_shape)

    def summary(self):
        lines = [f"input {self.input_shape}"]
        for layer in self.layers:
            n = sum(a.size for a in layer.params.values())
            lines.append(f"{layer!r:60s} -> {layer.output_shape} ({n} params)")
        lines.append(f"total trainable parameters: {self.n_parameters()}")
        return "\n".join(lines)


def predict_proba(net, images, batch_size=512):
    return net.predict_proba(images, batch_size)


def cross_entropy_loss(posteriors, labels, l2_terms=0.0):
    """Mean negative log-likelihood of the true labels plus the L2 terms."""
    p = np.asarray(posteriors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels < 0) | (labels >= p.shape[-1])):
        raise ValueError("labels out of range")
    picked = np.maximum(p[np.arange(len(labels)), labels], PROB_FLOOR)
    return float(-np.mean(np.log(picked)) + l2_terms)


def two_block_network(input_shape, n_classes=256, mode="valid", l2=0.01,
                   filters=(8, 16), kernels=(5, 3), dense_units=250,
                   dropout=(0.5, 0.5, 0.3), pool=(2, 2)):
    """Two conv blocks and two fully-connected layers.

    Default widths follow the reference configuration (8 and 16 filters,
    5x5 and 3x3 kernels, 250 hidden units). Pass ``(1, k)`` kernels and a
    ``(1, 2)`` pool for the 1D variant on ``(1, N, 1)`` inputs.
    """
    k1, k2 = kernels
    return Network([
        Conv2D(filters[0], k1, l2=l2, mode=mode),
        BatchNorm(),
        ReLU(),
        MaxPool(pool, pool),
        Dropout(dropout[0]),
        Conv2D(filters[1], k2, l2=l2, mode=mode),
        BatchNorm(),
        ReLU(),
        MaxPool(pool, pool),
        Dropout(dropout[1]),
        Flatten(),
        Dense(dense_units, activation="relu"),
        BatchNorm(),
        Dropout(dropout[2]),
        Dense(n_classes, init="glorot"),
        Softmax(),
    ], input_shape)


def cnn1d_network(n_samples, n_classes=256, **kw):
    """1D counterpart: same stack with ``1 x k`` kernels over ``(1, N, 1)``."""
    kw.setdefault("kernels", ((1, 5), (1, 3)))
    kw.setdefault("pool", (1, 2))
    return two_block_network((1, n_samples, 1), n_classes, **kw)
