"""1D -> 2D trace encodings: Gramian angular fields, Markov transition
field, recurrence plot and STFT spectrogram, plus the helpers used to combine
them into multi-channel inputs.

Every transform takes a 1D sample vector and returns a float64 image of shape
``(height, width, channels)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_image, min_max_rescale

METHODS = ("gasf", "gadf", "mtf", "rp", "stft")


@dataclass(frozen=True)
class PolarTrace:
    phi: np.ndarray
    radius: np.ndarray


@dataclass(frozen=True)
class MtfParams:
    n_quantiles: int = 8
    blur_block: int = 1

    def __post_init__(self):
        if self.n_quantiles < 2:
            raise ValueError(f"MTF needs at least 2 quantiles, got {self.n_quantiles}")
        if self.blur_block < 1:
            raise ValueError(f"blur_block must be positive, got {self.blur_block}")


@dataclass(frozen=True)
class RpParams:
    dimension: int = 1
    delay: int = 1
    threshold: float = 0.0
    binarize: bool = False

    def __post_init__(self):
        if self.dimension < 1 or self.delay < 1:
            raise ValueError("recurrence dimension and delay must be positive")
        if self.threshold < 0:
            raise ValueError("recurrence threshold must be nonnegative")


@dataclass(frozen=True)
class StftParams:
    window_kind: str = "hann"
    window_length: int = 8
    hop: int = 1
    sample_frequency: float = 0.625e9

    def __post_init__(self):
        if self.window_kind != "hann":
            raise ValueError(f"unsupported window {self.window_kind!r}")
        if self.window_length < 2:
            raise ValueError("window_length must be >= 2")
        if not 1 <= self.hop <= self.window_length:
            raise ValueError("hop must lie in [1, window_length]")

    @classmethod
    def from_overlap(cls, window_length=8, overlap_fraction=0.9, **kw):
        """Hop derived from a fractional overlap, rounded to at least 1."""
        hop = max(1, int(round((1.0 - overlap_fraction) * window_length)))
        return cls(window_length=window_length, hop=hop, **kw)

    @property
    def n_bins(self):
        return self.window_length // 2 + 1


def to_polar(x_scaled, tol=1e-12):
    x = np.asarray(x_scaled, dtype=np.float64)
    if np.any(np.abs(x) > 1.0 + tol):
        raise ValueError("polar encoding needs values in [-1, 1]")
    n = x.shape[-1]
    return PolarTrace(np.arccos(np.clip(x, -1.0, 1.0)), np.arange(1, n + 1) / n)


def _angles(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] == 1:
        # a single sample has no range; treat it as already scaled
        return to_polar(x).phi
    return to_polar(min_max_rescale(x)).phi


def gasf(x):
    """Gramian angular summation field, ``G[i,j] = cos(phi_i + phi_j)``."""
    phi = _angles(x)
    return np.cos(phi[:, None] + phi[None, :])[:, :, None]


def gadf(x):
    """Gramian angular difference field, ``D[i,j] = sin(phi_i - phi_j)``."""
    phi = _angles(x)
    return np.sin(phi[:, None] - phi[None, :])[:, :, None]


def quantile_bins(x, n_quantiles):
    """0-based quantile bin of every sample; ties go to the lower bin."""
    x = np.asarray(x, dtype=np.float64)
    if n_quantiles < 2:
        raise ValueError(f"MTF needs at least 2 quantiles, got {n_quantiles}")
    if np.unique(x).size < n_quantiles:
        raise ValueError("unresolvable quantiles")
    edges = np.quantile(x, np.arange(1, n_quantiles) / n_quantiles)
    return np.searchsorted(edges, x, side="left")


def transition_matrix(bins, n_quantiles):
    """Row-normalized first-order transition counts between bins.

    Rows of bins that are never left (only possible for a bin holding just
    the final sample) stay all-zero.
    """
    w = np.zeros((n_quantiles, n_quantiles))
    np.add.at(w, (bins[:-1], bins[1:]), 1.0)
    rows = w.sum(axis=1, keepdims=True)
    return np.divide(w, rows, out=np.zeros_like(w), where=rows > 0)


def block_average(img, block):
    """Mean over non-overlapping ``block x block`` tiles; edge tiles may be
    partial and are averaged over their actual extent."""
    img = as_image(img)
    if block == 1:
        return img
    h, w, _ = img.shape
    rows = np.arange(0, h, block)
    cols = np.arange(0, w, block)
    sums = np.add.reduceat(np.add.reduceat(img, rows, axis=0), cols, axis=1)
    rh = np.minimum(rows + block, h) - rows
    cw = np.minimum(cols + block, w) - cols
    return sums / (rh[:, None, None] * cw[None, :, None])


def mtf(x, params=MtfParams()):
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        raise ValueError("MTF needs at least 2 samples")
    q = quantile_bins(x, params.n_quantiles)
    w = transition_matrix(q, params.n_quantiles)
    return block_average(w[q[:, None], q[None, :]], params.blur_block)


def recurrence_plot(x, params=RpParams()):
    x = np.asarray(x, dtype=np.float64)
    n_traj = x.size - (params.dimension - 1) * params.delay
    if n_traj < 2:
        raise ValueError(
            f"recurrence plot needs N - (M-1)*tau >= 2, got {n_traj} trajectories")
    offsets = np.arange(params.dimension) * params.delay
    traj = x[np.arange(n_traj)[:, None] + offsets[None, :]]
    diff = traj[:, None, :] - traj[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    if params.binarize:
        dist = (dist <= params.threshold).astype(np.float64)
    return dist[:, :, None]


def _naive_dft(x):
    n = x.shape[-1]
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ basis.T


def _fft_radix2(x):
    """Iterative decimation-in-time FFT over the last axis (power-of-two
    length)."""
    n = x.shape[-1]
    levels = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(levels):
        rev |= ((idx >> b) & 1) << (levels - 1 - b)
    a = x[..., rev].astype(np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        a = a.reshape(*x.shape[:-1], n // size, size)
        even = a[..., :half].copy()
        odd = a[..., half:] * tw
        a[..., :half] = even + odd
        a[..., half:] = even - odd
        a = a.reshape(*x.shape[:-1], n)
        size *= 2
    return a


def dft(x):
    """Discrete Fourier transform over the last axis.

    Radix-2 for power-of-two lengths, direct summation otherwise.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if n < 1:
        raise ValueError("dft needs at least one sample")
    if n & (n - 1) == 0:
        return _fft_radix2(x)
    return _naive_dft(x.astype(np.complex128))


def hann_window(length):
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / (length - 1)))


def stft_frames(x, params=StftParams()):
    """Windowed, centered frames of ``x`` with shape ``(n_frames, L)``."""
    x = np.asarray(x, dtype=np.float64)
    L = params.window_length
    if x.size < L:
        raise ValueError(f"window of length {L} is longer than the trace ({x.size} samples)")
    pad = L // 2
    xp = np.pad(x, pad)
    n_frames = -(-x.size // params.hop)
    starts = np.arange(n_frames) * params.hop
    if starts[-1] + L > xp.size:
        raise ValueError("window longer than padded signal")
    return xp[starts[:, None] + np.arange(L)[None, :]] * hann_window(L)


def stft_spectrogram(x, params=StftParams()):
    """One-sided magnitude spectrogram, ``(frames, L//2 + 1, 1)``."""
    frames = stft_frames(x, params)
    return np.abs(dft(frames)[:, : params.n_bins])[:, :, None]


def stft_frequencies(params=StftParams()):
    return np.arange(params.n_bins) * params.sample_frequency / params.window_length


def rescale_01(img):
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        raise ValueError("degenerate image")
    out = (img - lo) / (hi - lo)
    out[img == lo] = 0.0
    out[img == hi] = 1.0
    return out


def upscale_spectrogram(img, target_height):
    """Spread the frequency bins of a ``(frames, bins)`` spectrogram over
    ``target_height`` rows, giving a ``(target_height, frames, C)`` image
    with frequency on the vertical axis."""
    img = as_image(img)
    bins = img.shape[1]
    if target_height < bins:
        raise ValueError(f"target height {target_height} is smaller than {bins} bins")
    counts = np.full(bins, target_height // bins)
    counts[: target_height % bins] += 1
    return np.repeat(img.transpose(1, 0, 2), counts, axis=0)


def stack_channels(imgs):
    imgs = [as_image(i) for i in imgs]
    if not imgs:
        raise ValueError("nothing to stack")
    shapes = {i.shape[:2] for i in imgs}
    if len(shapes) != 1:
        raise ValueError(f"cannot stack images of different sizes: {sorted(shapes)}")
    return np.concatenate(imgs, axis=2)


def paa(x, out_len):
    """Piecewise aggregate approximation; leftover samples join the last
    segment."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if not 1 <= out_len <= n:
        raise ValueError(f"out_len must lie in [1, {n}], got {out_len}")
    size = n // out_len
    starts = np.arange(out_len) * size
    sums = np.add.reduceat(x, starts)
    counts = np.full(out_len, size)
    counts[-1] = n - starts[-1]
    return sums / counts


def encode(x, method, mtf_params=MtfParams(), rp_params=RpParams(), stft_params=StftParams()):
    """Apply one named transform to a sample vector."""
    if method == "gasf":
        return gasf(x)
    if method == "gadf":
        return gadf(x)
    if method == "mtf":
        return mtf(x, mtf_params)
    if method == "rp":
        return recurrence_plot(x, rp_params)
    if method == "stft":
        return stft_spectrogram(x, stft_params)
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def encode_stacked(x, methods, **params):
    """Encode ``x`` with each method and stack the results as channels.

    When a spectrogram is combined with square images it is upscaled along
    the frequency axis to the square side first.
    """
    methods = list(methods)
    if len(methods) == 1:
        return encode(x, methods[0], **params)
    imgs = [encode(x, m, **params) for m in methods]
    square = [img for m, img in zip(methods, imgs) if m != "stft"]
    if square:
        side = square[0].shape[0]
        imgs = [upscale_spectrogram(img, side) if m == "stft" else img
                for m, img in zip(methods, imgs)]
    return stack_channels(imgs)


def encode_batch(samples, methods, **params):
    """Encode every row of a ``(n, N)`` array; returns ``(n, H, W, C)``."""
    samples = np.asarray(samples, dtype=np.float64)
    if isinstance(methods, str):
        methods = [methods]
    return np.stack([encode_stacked(row, methods, **params) for row in samples])


def gasf_batch(samples):
    """Vectorized GASF for a ``(n, N)`` array, ``(n, N, N, 1)`` output."""
    phi = np.arccos(min_max_rescale(samples))
    return np.cos(phi[:, :, None] + phi[:, None, :])[..., None]
