"""Label-preserving augmentations for images and raw traces.

All random operations take an explicit ``numpy.random.Generator``; batch
helpers derive one generator per example from ``seed + index`` so results do
not depend on processing order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from .core import Trace, as_image


class AugmentKind(str, enum.Enum):
    ROTATE_SHEAR = "rotate-shear"
    SHIFT_2D = "shift2d"
    RANDOM_ERASE = "erase"
    GAUSSIAN_BLUR = "blur"
    SALT_PEPPER = "salt-pepper"
    SHIFT_1D = "shift1d"
    NOISE_1D = "noise1d"


IMAGE_KINDS = {AugmentKind.ROTATE_SHEAR, AugmentKind.SHIFT_2D, AugmentKind.RANDOM_ERASE,
               AugmentKind.GAUSSIAN_BLUR, AugmentKind.SALT_PEPPER}

DEFAULTS = {
    AugmentKind.ROTATE_SHEAR: {"max_deg": 40.0, "shear": 0.5},
    AugmentKind.SHIFT_2D: {"max_frac": 0.2},
    AugmentKind.RANDOM_ERASE: {"min_area": 0.02, "max_area": 0.2},
    AugmentKind.GAUSSIAN_BLUR: {"sigma": 1.0},
    AugmentKind.SALT_PEPPER: {"rate": 0.02},
    AugmentKind.SHIFT_1D: {"max_shift": 50},
    AugmentKind.NOISE_1D: {"sigma": 1.0},
}


def rotate_shear(img, max_deg=40.0, shear=0.5, rng=None, angle=None, shear_factor=None):
    """Random rotation about the image center composed with a horizontal
    shear; bilinear interpolation, zero fill.

    ``angle`` (degrees) and ``shear_factor`` override the random draws.
    """
    img = as_image(img)
    rng = rng if rng is not None else np.random.default_rng()
    if angle is None:
        angle = rng.uniform(-max_deg, max_deg) if max_deg > 0 else 0.0
    if shear_factor is None:
        shear_factor = rng.uniform(-shear, shear) if shear > 0 else 0.0
    if angle == 0.0 and shear_factor == 0.0:
        return img.copy()
    t = math.radians(angle)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    sh = np.array([[1.0, 0.0], [shear_factor, 1.0]])
    fwd = rot @ sh
    inv = np.linalg.inv(fwd)
    center = (np.array(img.shape[:2], dtype=np.float64) - 1.0) / 2.0
    offset = center - inv @ center
    # exact quarter turns otherwise sample edge pixels at -1e-16 and lose them
    inv, offset = _snap(inv), _snap(offset)
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.affine_transform(
            img[:, :, c], inv, offset=offset, order=1, mode="constant", cval=0.0,
            prefilter=False)
    return out


def _snap(a, tol=1e-12):
    r = np.rint(a)
    return np.where(np.abs(a - r) < tol, r, a)


def shift_image(img, dy, dx):
    """Integer translation with zero fill (positive ``dy`` moves content down)."""
    img = as_image(img)
    h, w, _ = img.shape
    out = np.zeros_like(img)
    if abs(dy) >= h or abs(dx) >= w:
        return out
    src_y = slice(max(0, -dy), h - max(0, dy))
    dst_y = slice(max(0, dy), h - max(0, -dy))
    src_x = slice(max(0, -dx), w - max(0, dx))
    dst_x = slice(max(0, dx), w - max(0, -dx))
    out[dst_y, dst_x] = img[src_y, src_x]
    return out


def shift2d(img, max_frac=0.2, rng=None):
    img = as_image(img)
    rng = rng if rng is not None else np.random.default_rng()
    h, w, _ = img.shape
    my, mx = int(max_frac * h), int(max_frac * w)
    dy = int(rng.integers(-my, my + 1)) if my else 0
    dx = int(rng.integers(-mx, mx + 1)) if mx else 0
    return shift_image(img, dy, dx)


def _erase_box(h, w, min_area, max_area, rng, attempts=100):
    total = h * w
    for _ in range(attempts):
        area = rng.uniform(min_area, max_area) * total
        aspect = math.exp(rng.uniform(math.log(0.3), math.log(1 / 0.3)))
        eh = int(round(math.sqrt(area * aspect)))
        ew = int(round(math.sqrt(area / aspect)))
        if 1 <= eh <= h and 1 <= ew <= w and min_area <= eh * ew / total <= max_area:
            return eh, ew
    # small images: pick among the box sizes that satisfy the area bounds
    sizes = [(a, b) for a in range(1, h + 1) for b in range(1, w + 1)
             if min_area <= a * b / total <= max_area]
    if not sizes:
        raise ValueError(f"no rectangle in a {h}x{w} image covers [{min_area}, {max_area}] of it")
    return sizes[int(rng.integers(len(sizes)))]


def random_erase(img, min_area=0.02, max_area=0.2, rng=None, return_box=False):
    """Replace one random rectangle by uniform noise in [0, 1]."""
    if not (0 < min_area <= max_area < 1):
        raise ValueError(f"erase area bounds must satisfy 0 < min <= max < 1, got "
                         f"[{min_area}, {max_area}]")
    img = as_image(img)
    rng = rng if rng is not None else np.random.default_rng()
    h, w, c = img.shape
    eh, ew = _erase_box(h, w, min_area, max_area, rng)
    y0 = int(rng.integers(0, h - eh + 1))
    x0 = int(rng.integers(0, w - ew + 1))
    out = img.copy()
    out[y0:y0 + eh, x0:x0 + ew] = rng.random((eh, ew, c))
    if return_box:
        return out, (y0, x0, eh, ew)
    return out


def gaussian_kernel(sigma):
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma=1.0):
    k = gaussian_kernel(sigma)
    img = as_image(img)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def salt_pepper(img, rate=0.02, rng=None):
    if not 0 <= rate <= 1:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    img = as_image(img)
    rng = rng if rng is not None else np.random.default_rng()
    hit = rng.random(img.shape[:2]) < rate
    values = rng.integers(0, 2, size=img.shape[:2]).astype(np.float64)
    out = img.copy()
    out[hit] = values[hit][:, None]
    return out


def shift_samples(x, shift):
    """Right shift of a sample vector (or ``(n, N)`` rows) with zero fill."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    if shift == 0:
        return x.copy()
    out[..., shift:] = x[..., :-shift]
    return out


def shift1d(trace, max_shift, rng=None):
    n = len(trace.samples)
    if not 0 <= max_shift < n:
        raise ValueError(f"max_shift must lie in [0, {n - 1}], got {max_shift}")
    rng = rng if rng is not None else np.random.default_rng()
    s = int(rng.integers(0, max_shift + 1)) if max_shift else 0
    return replace(trace, samples=shift_samples(trace.samples, s))


def noise1d(trace, sigma, rng=None):
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return replace(trace, samples=trace.samples.copy())
    rng = rng if rng is not None else np.random.default_rng()
    return replace(trace, samples=trace.samples + rng.normal(0.0, sigma, trace.samples.shape))


@dataclass(frozen=True)
class AugmentSpec:
    kind: AugmentKind
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        kind = AugmentKind(self.kind)
        object.__setattr__(self, "kind", kind)
        unknown = set(self.params) - set(DEFAULTS[kind])
        if unknown:
            raise ValueError(f"unknown parameters for {kind.value}: {sorted(unknown)}")
        merged = {**DEFAULTS[kind], **self.params}
        object.__setattr__(self, "params", merged)
        _validate(kind, merged)

    @property
    def is_image(self):
        return self.kind in IMAGE_KINDS

    def apply(self, item, rng):
        p = self.params
        k = self.kind
        if k is AugmentKind.ROTATE_SHEAR:
            return rotate_shear(item, p["max_deg"], p["shear"], rng)
        if k is AugmentKind.SHIFT_2D:
            return shift2d(item, p["max_frac"], rng)
        if k is AugmentKind.RANDOM_ERASE:
            return random_erase(item, p["min_area"], p["max_area"], rng)
        if k is AugmentKind.GAUSSIAN_BLUR:
            return gaussian_blur(item, p["sigma"])
        if k is AugmentKind.SALT_PEPPER:
            return salt_pepper(item, p["rate"], rng)
        if isinstance(item, Trace):
            trace = item
        else:
            trace = Trace(np.asarray(item, dtype=np.float64))
        if k is AugmentKind.SHIFT_1D:
            out = shift1d(trace, int(p["max_shift"]), rng)
        else:
            out = noise1d(trace, p["sigma"], rng)
        return out if isinstance(item, Trace) else out.samples

    def apply_batch(self, batch, seed=None, offset=0):
        """Augment every item of ``batch``; item ``i`` uses the generator
        seeded with ``seed + offset + i``."""
        base = self.seed if seed is None else seed
        return np.stack([
            self.apply(item, np.random.default_rng(base + offset + i))
            for i, item in enumerate(batch)
        ])

    def to_config(self):
        out = {"augment.kind": self.kind.value, "augment.seed": self.seed}
        out.update({f"augment.{k}": v for k, v in self.params.items()})
        return out


def _validate(kind, p):
    if kind is AugmentKind.ROTATE_SHEAR:
        if not 0 <= p["max_deg"] <= 180 or p["shear"] < 0:
            raise ValueError("rotation must lie in [0, 180] degrees and shear must be >= 0")
    elif kind is AugmentKind.SHIFT_2D:
        if not 0 <= p["max_frac"] < 1:
            raise ValueError("shift fraction must lie in [0, 1)")
    elif kind is AugmentKind.RANDOM_ERASE:
        if not 0 < p["min_area"] <= p["max_area"] < 1:
            raise ValueError("erase area bounds must satisfy 0 < min <= max < 1")
    elif kind is AugmentKind.GAUSSIAN_BLUR:
        if p["sigma"] <= 0:
            raise ValueError("blur sigma must be positive")
    elif kind is AugmentKind.SALT_PEPPER:
        if not 0 <= p["rate"] <= 1:
            raise ValueError("salt-and-pepper rate must lie in [0, 1]")
    elif kind is AugmentKind.SHIFT_1D:
        if p["max_shift"] < 0 or int(p["max_shift"]) != p["max_shift"]:
            raise ValueError("max_shift must be a nonnegative integer")
    elif kind is AugmentKind.NOISE_1D:
        if p["sigma"] < 0:
            raise ValueError("noise sigma must be nonnegative")
