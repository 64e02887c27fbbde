"""1D preprocessing baselines: FFT magnitude features and PCA projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import dft


def fft_features(x):
    """One-sided magnitude spectrum of each trace (last axis)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    return np.abs(dft(x)[..., : n // 2 + 1])


def jacobi_eigh(a, tol=1e-10, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius norm drops below ``tol``
    (relative to the matrix norm when that exceeds one). Returns
    ``(eigenvalues, eigenvectors)`` sorted by descending eigenvalue, vectors
    in columns.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    scale = max(1.0, np.linalg.norm(a))
    offdiag = ~np.eye(n, dtype=bool)

    def off(m):
        return np.sqrt(np.sum(m[offdiag] ** 2))

    for _ in range(max_sweeps):
        if off(a) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
    else:
        raise RuntimeError("Jacobi eigen-decomposition did not converge")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, N), rows orthonormal
    eigenvalues: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[0]


def pca_fit(traces, k=15):
    """Top-``k`` principal components of mean-centered traces.

    ``traces`` may be a TraceSet or a ``(n, N)`` array.
    """
    x = np.asarray(getattr(traces, "samples", traces), dtype=np.float64)
    n, dim = x.shape
    if not 1 <= k <= min(n, dim):
        raise ValueError(f"k must lie in [1, {min(n, dim)}], got {k}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / max(n - 1, 1)
    w, v = jacobi_eigh(cov)
    w = np.clip(w, 0.0, None)
    comps = v[:, :k].T
    # deterministic sign: largest-magnitude entry positive
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps = comps * np.where(flip == 0, 1.0, flip)[:, None]
    return PcaModel(mean, comps, w[:k])


def pca_transform(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.mean.size:
        raise ValueError(f"expected length {model.mean.size}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def pca_inverse(model, z):
    return np.asarray(z) @ model.components + model.mean
