"""Pearson-correlation leakage analysis of traces and images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import hamming_weight


@dataclass(frozen=True)
class CorrelationMap:
    values: np.ndarray
    degenerate: np.ndarray
    target_description: str = ""

    @property
    def peak(self):
        """Index (tuple) of the maximum absolute correlation."""
        return np.unravel_index(np.argmax(np.abs(self.values)), self.values.shape)

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values)))


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("pearson needs two equal-length vectors of length >= 2")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(da @ da), np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ValueError("zero variance")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def leakage_values(labels, mode="hw"):
    """Leakage variable for correlation: HW of the label or its raw value."""
    labels = np.asarray(labels)
    if mode == "hw":
        return hamming_weight(labels.astype(np.uint8)).astype(np.float64)
    if mode == "value":
        return labels.astype(np.float64)
    raise ValueError(f"unknown leakage mode {mode!r}")


def _columnwise(x, leak, description):
    x = np.asarray(x, dtype=np.float64)
    leak = np.asarray(leak, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations")
    if leak.shape != (n,):
        raise ValueError(f"leakage vector has length {leak.size}, expected {n}")
    dl = leak - leak.mean()
    sl = np.sqrt(dl @ dl)
    if sl == 0:
        raise ValueError("zero variance")
    flat = x.reshape(n, -1)
    dx = flat - flat.mean(axis=0)
    sx = np.sqrt(np.einsum("ij,ij->j", dx, dx))
    # spread below rounding noise counts as constant
    degenerate = sx <= 1e-12 * (np.abs(flat).max(axis=0) + 1e-300) * np.sqrt(n)
    num = dl @ dx
    rho = np.divide(num, sx * sl, out=np.zeros_like(num), where=~degenerate)
    rho = np.clip(rho, -1.0, 1.0)
    shape = x.shape[1:]
    return CorrelationMap(rho.reshape(shape), degenerate.reshape(shape), description)


def correlation_map_2d(images, leakvals, target_description="HW(y)"):
    """Per-pixel correlation of an image stack ``(n, H, W[, C])`` against a
    leakage vector."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim not in (3, 4):
        raise ValueError(f"expected an (n, H, W[, C]) stack, got shape {images.shape}")
    return _columnwise(images, leakvals, target_description)


def correlation_map_1d(traces, leakvals, target_description="HW(y)"):
    x = np.asarray(getattr(traces, "samples", traces), dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected an (n, N) trace array")
    return _columnwise(x, leakvals, target_description)


def select_poi(cmap, k=1):
    """Indices of the ``k`` samples (1D map) with the largest ``|rho|``, in
    ascending index order."""
    vals = np.abs(np.asarray(cmap.values))
    if vals.ndim != 1:
        raise ValueError("point-of-interest selection expects a 1D map")
    if not 1 <= k <= vals.size:
        raise ValueError(f"k must lie in [1, {vals.size}]")
    # stable sort so equal correlations resolve to the lower index
    top = np.argsort(-vals, kind="stable")[:k]
    return np.sort(top)
