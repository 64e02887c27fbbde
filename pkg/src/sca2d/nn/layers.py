"""Layers of the from-scratch CNN.

Activations are channel-last: ``(batch, height, width, channels)`` for the
convolutional part and ``(batch, features)`` after ``Flatten``. Every layer
implements ``forward(x, training)`` and ``backward(dout)``; parameterized
layers keep ``params`` and the matching ``grads`` after a backward pass.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


class Layer:
    kind = "layer"
    trainable = False

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.needs_input_grad = True  # false for the first layer of a network
        self.state = {}  # non-trained arrays that still belong in checkpoints
        self.input_shape = None
        self.output_shape = None

    def build(self, input_shape, rng):
        self.input_shape = tuple(input_shape)
        self.output_shape = self.compute_output_shape(self.input_shape)
        return self.output_shape

    def compute_output_shape(self, input_shape):
        return input_shape

    def config(self):
        return {}

    def spec(self):
        return {"kind": self.kind, **self.config()}

    def arrays(self):
        """Arrays saved in checkpoints, in declaration order."""
        return {**self.params, **self.state}

    def l2_penalty(self):
        return 0.0

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def conv2d_forward(x, kernels, bias=None, mode="valid"):
    """Cross-correlation of ``x (B,H,W,C)`` with ``kernels (kh,kw,C,F)``."""
    x = np.asarray(x, dtype=np.float64)
    kh, kw, c, _ = kernels.shape
    if x.ndim != 4 or x.shape[3] != c:
        raise ValueError(f"input of shape {x.shape} does not match kernels {kernels.shape}")
    if mode == "same":
        x = np.pad(x, ((0, 0), ((kh - 1) // 2, kh // 2), ((kw - 1) // 2, kw // 2), (0, 0)))
    elif mode != "valid":
        raise ValueError(f"unknown padding mode {mode!r}")
    if x.shape[1] < kh or x.shape[2] < kw:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {x.shape[1]}x{x.shape[2]}")
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (B,Ho,Wo,C,kh,kw)
    out = np.tensordot(win, kernels.transpose(2, 0, 1, 3), axes=3)
    if bias is not None:
        out += bias
    return out


class Conv2D(Layer):
    kind = "conv2d"
    trainable = True

    def __init__(self, filters, kernel_size, l2=0.0, mode="valid"):
        super().__init__()
        self.filters = int(filters)
        self.kernel_size = _pair(kernel_size)
        self.l2 = float(l2)
        if mode not in ("valid", "same"):
            raise ValueError(f"unknown padding mode {mode!r}")
        self.mode = mode

    def config(self):
        return {"filters": self.filters, "kernel_size": list(self.kernel_size),
                "l2": self.l2, "mode": self.mode}

    def compute_output_shape(self, input_shape):
        h, w, _ = input_shape
        kh, kw = self.kernel_size
        if self.mode == "same":
            return (h, w, self.filters)
        if h < kh or w < kw:
            raise ValueError(f"kernel {kh}x{kw} does not fit input {h}x{w}")
        return (h - kh + 1, w - kw + 1, self.filters)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        kh, kw = self.kernel_size
        c = input_shape[2]
        limit = np.sqrt(6.0 / (kh * kw * c))  # He-uniform
        self.params = {
            "W": rng.uniform(-limit, limit, (kh, kw, c, self.filters)),
            "b": np.zeros(self.filters),
        }
        return out

    def _pads(self):
        kh, kw = self.kernel_size
        if self.mode == "same":
            return ((kh - 1) // 2, kh // 2), ((kw - 1) // 2, kw // 2)
        return (0, 0), (0, 0)

    def forward(self, x, training=False):
        py, px = self._pads()
        self._xp = np.pad(x, ((0, 0), py, px, (0, 0))) if self.mode == "same" else x
        return conv2d_forward(self._xp, self.params["W"], self.params["b"], "valid")

    def backward(self, dout):
        W = self.params["W"]
        kh, kw, _, _ = W.shape
        win = sliding_window_view(self._xp, (kh, kw), axis=(1, 2))
        dW = np.tensordot(win, dout, axes=([0, 1, 2], [0, 1, 2]))  # (C,kh,kw,F)
        self.grads = {
            "W": dW.transpose(1, 2, 0, 3) + 2.0 * self.l2 * W,
            "b": dout.sum(axis=(0, 1, 2)),
        }
        if not self.needs_input_grad:
            return None
        # full correlation of dout with the flipped kernel
        dpad = np.pad(dout, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        dwin = sliding_window_view(dpad, (kh, kw), axis=(1, 2))  # (B,H,W,F,kh,kw)
        wflip = W[::-1, ::-1].transpose(3, 0, 1, 2)  # (F,kh,kw,C)
        dxp = np.tensordot(dwin, wflip, axes=3)
        if self.mode == "same":
            (t, b), (l, r) = self._pads()
            dxp = dxp[:, t:dxp.shape[1] - b, l:dxp.shape[2] - r]
        return dxp

    def l2_penalty(self):
        return self.l2 * float(np.sum(self.params["W"] ** 2))


class BatchNorm(Layer):
    kind = "batchnorm"
    trainable = True

    def __init__(self, momentum=0.9, eps=1e-5):
        super().__init__()
        self.momentum = float(momentum)
        self.eps = float(eps)

    def config(self):
        return {"momentum": self.momentum, "eps": self.eps}

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        c = input_shape[-1]
        self.params = {"gamma": np.ones(c), "beta": np.zeros(c)}
        self.state = {"running_mean": np.zeros(c), "running_var": np.ones(c)}
        return out

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        if training:
            m = int(np.prod([x.shape[a] for a in axes]))
            if x.shape[0] < 2:
                raise ValueError("batch normalization needs a batch of at least 2 in training")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            mom = self.momentum
            self.state["running_mean"] = mom * self.state["running_mean"] + (1 - mom) * mean
            self.state["running_var"] = mom * self.state["running_var"] + (1 - mom) * var
            self._inv = 1.0 / np.sqrt(var + self.eps)
            self._xhat = (x - mean) * self._inv
            self._m = m
            return self.params["gamma"] * self._xhat + self.params["beta"]
        inv = 1.0 / np.sqrt(self.state["running_var"] + self.eps)
        return self.params["gamma"] * (x - self.state["running_mean"]) * inv + self.params["beta"]

    def backward(self, dout):
        axes = tuple(range(dout.ndim - 1))
        xhat = self._xhat
        self.grads = {
            "gamma": np.sum(dout * xhat, axis=axes),
            "beta": dout.sum(axis=axes),
        }
        dxhat = dout * self.params["gamma"]
        s1 = dxhat.sum(axis=axes)
        s2 = np.sum(dxhat * xhat, axis=axes)
        return self._inv / self._m * (self._m * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class MaxPool(Layer):
    kind = "maxpool"

    def __init__(self, pool=2, stride=None):
        super().__init__()
        self.pool = _pair(pool)
        self.stride = _pair(stride if stride is not None else pool)

    def config(self):
        return {"pool": list(self.pool), "stride": list(self.stride)}

    def compute_output_shape(self, input_shape):
        h, w, c = input_shape
        (ph, pw), (sh, sw) = self.pool, self.stride
        if h < ph or w < pw:
            raise ValueError(f"pool {ph}x{pw} larger than input {h}x{w}")
        return ((h - ph) // sh + 1, (w - pw) // sw + 1, c)

    def forward(self, x, training=False):
        (ph, pw), (sh, sw) = self.pool, self.stride
        b, h, w, c = x.shape
        ho, wo = (h - ph) // sh + 1, (w - pw) // sw + 1
        win = sliding_window_view(x, (ph, pw), axis=(1, 2))[:, ::sh, ::sw][:, :ho, :wo]
        flat = win.reshape(b, ho, wo, c, ph * pw)
        arg = flat.argmax(axis=-1)
        self._shape = x.shape
        self._arg = arg
        return np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        (ph, pw), (sh, sw) = self.pool, self.stride
        b, h, w, c = self._shape
        _, ho, wo, _ = dout.shape
        ay, ax = np.divmod(self._arg, pw)
        rows = (np.arange(ho) * sh)[None, :, None, None] + ay
        cols = (np.arange(wo) * sw)[None, None, :, None] + ax
        bi = np.arange(b)[:, None, None, None]
        ci = np.arange(c)[None, None, None, :]
        flat = ((bi * h + rows) * w + cols) * c + ci
        dx = np.zeros(b * h * w * c)
        if sh >= ph and sw >= pw:
            dx[flat.ravel()] = dout.ravel()  # windows do not overlap
        else:
            np.add.at(dx, flat.ravel(), dout.ravel())
        return dx.reshape(self._shape)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = float(rate)
        self.rng = np.random.default_rng(0)
        self.frozen = False  # identity masks (gradient checks)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, training=False):
        if not training or self.rate == 0 or self.frozen:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    kind = "dense"
    trainable = True

    def __init__(self, units, activation="linear", l2=0.0, init=None):
        super().__init__()
        if activation not in ("linear", "relu"):
            raise ValueError(f"unsupported dense activation {activation!r}")
        self.units = int(units)
        self.activation = activation
        self.l2 = float(l2)
        self.init = init or ("he" if activation == "relu" else "glorot")

    def config(self):
        return {"units": self.units, "activation": self.activation, "l2": self.l2,
                "init": self.init}

    def compute_output_shape(self, input_shape):
        if len(input_shape) != 1:
            raise ValueError(f"dense layer needs flat input, got shape {input_shape}")
        return (self.units,)

    def build(self, input_shape, rng):
        out = super().build(input_shape, rng)
        fan_in = input_shape[0]
        if self.init == "he":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + self.units))
        self.params = {"W": rng.uniform(-limit, limit, (fan_in, self.units)),
                       "b": np.zeros(self.units)}
        return out

    def forward(self, x, training=False):
        self._x = x
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            self._mask = z > 0
            return np.where(self._mask, z, 0.0)
        return z

    def backward(self, dout):
        if self.activation == "relu":
            dout = np.where(self._mask, dout, 0.0)
        self.grads = {"W": self._x.T @ dout + 2.0 * self.l2 * self.params["W"],
                      "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T

    def l2_penalty(self):
        return self.l2 * float(np.sum(self.params["W"] ** 2))


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False):
        self._p = softmax(x)
        return self._p

    def backward(self, dout):
        p = self._p
        return p * (dout - np.sum(dout * p, axis=-1, keepdims=True))


LAYER_TYPES = {cls.kind: cls for cls in
               (Conv2D, BatchNorm, ReLU, MaxPool, Dropout, Flatten, Dense, Softmax)}


def layer_from_spec(spec):
    spec = dict(spec)
    cls = LAYER_TYPES[spec.pop("kind")]
    return cls(**spec)
