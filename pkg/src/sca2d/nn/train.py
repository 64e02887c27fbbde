from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .optim import Adam

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0002
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    def to_config(self):
        return {f"train.{k}": v for k, v in asdict(self).items()}


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_loss: float

    @property
    def epochs_run(self):
        return len(self.history)


def _batches(n, batch_size):
    starts = list(range(0, n, batch_size))
    # batch norm needs >= 2 examples; fold a lone trailing example back in
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()
    bounds = starts[1:] + [n]
    return list(zip(starts, bounds))


def train(net, images, labels, config=TrainConfig(), augment=None, validation=None,
          callback=None):
    """Mini-batch Adam with early stopping on the validation loss.

    The network is built from ``config.seed`` when it has not been built
    yet. A validation split is carved from the data unless ``validation``
    ``(images, labels)`` is given. ``augment(batch, epoch, offset)`` may
    transform each training batch. The weights of the epoch with the lowest
    validation loss are restored before returning.
    """
    x = net.check_input(images)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty training set")
    if len(y) != len(x):
        raise ValueError(f"{len(x)} images but {len(y)} labels")
    n_out = net.layers[-1].output_shape[0] if net.built else None
    if np.any(y < 0) or (n_out is not None and np.any(y >= n_out)):
        raise ValueError("labels out of range")

    split_ss, shuffle_ss = np.random.SeedSequence([config.seed, 1]).spawn(2)
    if not net.built:
        net.build(config.seed)
    if validation is None:
        n_val = max(1, int(math.ceil(config.validation_fraction * len(x))))
        if len(x) - n_val < 2:
            raise ValueError("training set too small for a validation split")
        perm = np.random.default_rng(split_ss).permutation(len(x))
        xv, yv = x[perm[:n_val]], y[perm[:n_val]]
        xt, yt = x[perm[n_val:]], y[perm[n_val:]]
    else:
        xt, yt = x, y
        xv = net.check_input(validation[0])
        yv = np.asarray(validation[1], dtype=np.int64)

    shuffle_rng = np.random.default_rng(shuffle_ss)
    opt = Adam(config.learning_rate)
    best = (math.inf, 0, net.get_weights())
    history = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(xt))
        total = 0.0
        for a, b in _batches(len(xt), config.batch_size):
            idx = order[a:b]
            xb = xt[idx]
            if augment is not None:
                xb = augment(xb, epoch, a)
            total += net.loss_and_grads(xb, yt[idx], training=True) * (b - a)
            opt.step(net)
        val_loss = _eval_loss(net, xv, yv)
        history.append({"epoch": epoch, "train_loss": total / len(xt), "val_loss": val_loss})
        log.debug("epoch %d train %.4f val %.4f", epoch, total / len(xt), val_loss)
        if callback is not None:
            callback(history[-1])
        if val_loss < best[0]:
            best = (val_loss, epoch, net.get_weights())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    net.set_weights(best[2])
    return TrainResult(history, best[1], best[0])


def _eval_loss(net, x, y, batch_size=512):
    p = net.predict_proba(x, batch_size)
    picked = np.maximum(p[np.arange(len(y)), y], 1e-300)
    return float(-np.mean(np.log(picked)) + net.l2_penalty())


def accuracy(net, images, labels):
    p = net.predict_proba(images)
    return float(np.mean(p.argmax(axis=1) == np.asarray(labels)))
