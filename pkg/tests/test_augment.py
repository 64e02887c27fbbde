import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sca2d.augment import (AugmentKind, AugmentSpec, gaussian_blur, gaussian_kernel, noise1d,
                           random_erase, rotate_shear, salt_pepper, shift1d, shift2d,
                           shift_image, shift_samples)
from sca2d.core import Trace


def test_rotate_identity_and_flip(rng):
    img = rng.normal(size=(6, 6, 1))
    assert np.array_equal(rotate_shear(img, 0, 0, rng), img)
    flat = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = rotate_shear(flat, angle=180.0, shear_factor=0.0)[..., 0]
    ref = np.array([[flat[1 - i, 1 - j] for j in range(2)] for i in range(2)])
    assert np.allclose(out, ref, atol=1e-9)


@given(st.integers(0, 10_000))
def test_rotate_shape_and_finite(seed):
    r = np.random.default_rng(seed)
    img = r.random((9, 7, 2))
    out = rotate_shear(img, rng=r)
    assert out.shape == img.shape and np.all(np.isfinite(out))


def test_shift2d_examples(rng):
    img = rng.normal(size=(5, 5, 1))
    assert np.array_equal(shift2d(img, 0, rng), img)
    out = shift_image([[1, 2], [3, 4]], 1, 0)[..., 0]
    assert out.tolist() == [[0, 0], [1, 2]]


@given(st.integers(0, 10_000))
def test_shift2d_nonzero_never_grows(seed):
    r = np.random.default_rng(seed)
    img = r.random((10, 10, 1)) * (r.random((10, 10, 1)) < 0.5)
    out = shift2d(img, 0.2, r)
    assert np.count_nonzero(out) <= np.count_nonzero(img)


@given(st.integers(0, 10_000))
def test_random_erase_contract(seed):
    r = np.random.default_rng(seed)
    img = r.normal(size=(20, 20, 1)) + 5.0
    out, (y0, x0, eh, ew) = random_erase(img, rng=np.random.default_rng(seed), return_box=True)
    assert 0.02 <= eh * ew / 400 <= 0.2
    mask = np.zeros((20, 20), bool)
    mask[y0:y0 + eh, x0:x0 + ew] = True
    assert np.array_equal(out[~mask], img[~mask])
    assert np.all((out[mask] >= 0) & (out[mask] <= 1))
    again = random_erase(img, rng=np.random.default_rng(seed))
    assert again.tobytes() == out.tobytes()


def test_random_erase_bounds():
    for lo, hi in [(0, 0.2), (0.3, 0.2), (0.1, 1.0)]:
        with pytest.raises(ValueError):
            random_erase(np.ones((4, 4)), lo, hi)


def test_blur():
    const = np.full((7, 7, 1), 3.25)
    assert np.allclose(gaussian_blur(const, 1.3), const, atol=1e-12)
    for s in (0.5, 1.0, 2.2):
        assert abs(gaussian_kernel(s).sum() - 1) < 1e-12
    imp = np.zeros((15, 15))
    imp[7, 7] = 1.0
    k = np.array(oracles.gaussian_kernel(1.0))
    out = gaussian_blur(imp, 1.0)[..., 0]
    assert np.allclose(out[4:11, 4:11], np.outer(k, k), atol=1e-15)
    with pytest.raises(ValueError):
        gaussian_blur(imp, 0.0)


def test_salt_pepper(rng):
    img = rng.normal(size=(100, 100, 1)) + 5.0
    assert np.array_equal(salt_pepper(img, 0.0, rng), img)
    assert np.all(np.isin(salt_pepper(img, 1.0, rng), [0.0, 1.0]))
    rate, n = 0.1, img.size
    changed = np.mean(salt_pepper(img, rate, rng) != img)
    assert abs(changed - rate) <= 5 * math.sqrt(rate * (1 - rate) / n)
    with pytest.raises(ValueError):
        salt_pepper(img, 1.5, rng)


def test_shift1d_and_noise(rng):
    t = Trace(np.array([1.0, 2, 3, 4]), label=9)
    assert np.array_equal(shift1d(t, 0, rng).samples, t.samples)
    assert shift_samples([1, 2, 3, 4], 2).tolist() == [0, 0, 1, 2]
    assert shift1d(t, 3, rng).label == 9
    with pytest.raises(ValueError):
        shift1d(t, 4, rng)
    assert np.array_equal(noise1d(t, 0, rng).samples, t.samples)
    big = Trace(np.zeros(100_000), label=3)
    out = noise1d(big, 2.0, rng)
    assert out.label == 3
    assert abs(out.samples.mean()) < 5 * 2.0 / math.sqrt(100_000)


@pytest.mark.parametrize("kind", [k.value for k in AugmentKind])
def test_spec_reproducible_and_shape_preserving(kind):
    spec = AugmentSpec(kind, seed=11)
    if spec.is_image:
        batch = np.random.default_rng(0).random((4, 12, 12, 1))
    else:
        spec = AugmentSpec(kind, {"max_shift": 5} if kind == "shift1d" else {}, seed=11)
        batch = np.random.default_rng(0).normal(size=(4, 30))
    a = spec.apply_batch(batch)
    b = spec.apply_batch(batch)
    assert a.shape == batch.shape and a.tobytes() == b.tobytes()
    assert np.all(np.isfinite(a))
    # per-example seeds: item i does not depend on the rest of the batch
    tail = spec.apply_batch(batch[2:], offset=2)
    assert np.array_equal(tail, a[2:])


def test_spec_validation():
    with pytest.raises(ValueError):
        AugmentSpec("erase", {"min_area": 0.5, "max_area": 0.1})
    with pytest.raises(ValueError):
        AugmentSpec("blur", {"radius": 2})
    with pytest.raises(ValueError):
        AugmentSpec("mixup")
    assert AugmentSpec("blur").params == {"sigma": 1.0}
