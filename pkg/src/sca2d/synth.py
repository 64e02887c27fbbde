"""Synthetic AES power traces with Hamming-weight leakage.

Each trace is a fixed smooth carrier plus ``leak_scale * (HW(v) - 4)`` at the
leak samples plus white Gaussian noise, optionally first-order masked and
randomly right-shifted. Trace ``i`` draws all of its randomness from the
seed sequence ``(seed, i)``, so any prefix of a set is reproducible on its
own and generation order does not matter.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .augment import shift_samples
from .core import HW_TABLE, SBOX, IntermediateValueSpec, TargetKind, TraceSet

DEFAULT_KEY = bytes.fromhex("2b7e151628aed2a6abf7158809cf4f3c")


def noise_for_correlation(rho, leak_scale=1.0):
    """Noise sigma at which a single leak sample correlates with HW(y) at
    ``rho`` (HW of a uniform byte has variance 2)."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    return leak_scale * math.sqrt(2.0 * (1.0 / rho ** 2 - 1.0))


@dataclass(frozen=True)
class SynthConfig:
    n_traces: int = 3000
    n_samples: int = 40
    leak_indices: tuple = (17,)
    leak_scale: float = 1.0
    noise_sigma: float = math.sqrt(6.0)
    desync_max: int = 0
    masked: bool = False
    spec: IntermediateValueSpec = field(default_factory=IntermediateValueSpec)
    key: bytes = DEFAULT_KEY
    seed: int = 0
    role: str = "profiling"
    carrier_amplitude: float = 3.0
    carrier_period: float = 8.0
    sample_frequency: float = 0.625e9

    def __post_init__(self):
        object.__setattr__(self, "leak_indices", tuple(int(i) for i in self.leak_indices))
        object.__setattr__(self, "key", bytes(self.key))
        if self.n_traces < 1 or self.n_samples < 2:
            raise ValueError("need at least one trace of at least two samples")
        if not self.leak_indices:
            raise ValueError("at least one leak index is required")
        if any(not 0 <= i < self.n_samples for i in self.leak_indices):
            raise ValueError(f"leak indices {self.leak_indices} outside [0, {self.n_samples})")
        if self.masked and len(self.leak_indices) < 2:
            raise ValueError("masked traces need two leak indices (mask, masked value)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not 0 <= self.desync_max < self.n_samples:
            raise ValueError(f"desync_max must lie in [0, {self.n_samples})")
        if len(self.key) != 16:
            raise ValueError("key must be 16 bytes")
        if self.masked and self.spec.kind is not TargetKind.SBOX_OUTPUT:
            raise ValueError("masking is only modeled for the S-box output target")

    def to_config(self):
        d = asdict(self)
        d["key"] = self.key.hex()
        d["leak_indices"] = ",".join(str(i) for i in self.leak_indices)
        d["spec"] = f"{self.spec.kind.value}:{self.spec.byte_index}:{self.spec.partner_index}"
        return {f"synth.{k}": v for k, v in d.items()}


def carrier(n_samples, amplitude=3.0, period=8.0):
    """Deterministic oscillating baseline shared by all traces."""
    t = np.arange(n_samples)
    return amplitude * (np.sin(2 * np.pi * t / period) + 0.3 * np.sin(2 * np.pi * t / (2.7 * period)))


def generate(config, return_meta=False):
    """Build a TraceSet from ``config``.

    With ``return_meta`` also returns a dict holding the per-trace
    desynchronization ``offsets`` and the mask bytes ``masks`` (unused
    unless the config is masked).
    """
    n, N = config.n_traces, config.n_samples
    key = np.frombuffer(config.key, dtype=np.uint8)
    base = carrier(N, config.carrier_amplitude, config.carrier_period)
    samples = np.empty((n, N))
    plaintexts = np.empty((n, 16), dtype=np.uint8)
    offsets = np.zeros(n, dtype=np.int64)
    masks = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        rng = np.random.default_rng([config.seed, i])
        plaintexts[i] = rng.integers(0, 256, 16, dtype=np.uint8)
        masks[i] = rng.integers(0, 256, dtype=np.uint8)
        samples[i] = rng.normal(0.0, config.noise_sigma, N) if config.noise_sigma else 0.0
        offsets[i] = rng.integers(0, config.desync_max + 1) if config.desync_max else 0

    labels = config.spec.label(plaintexts, key).astype(np.int64)
    samples += base
    if config.masked:
        i0, i1 = config.leak_indices[:2]
        sbox_out = SBOX[plaintexts[:, config.spec.byte_index] ^ key[config.spec.byte_index]]
        samples[:, i0] += config.leak_scale * (HW_TABLE[masks].astype(np.float64) - 4.0)
        samples[:, i1] += config.leak_scale * (HW_TABLE[sbox_out ^ masks].astype(np.float64) - 4.0)
    else:
        leak = config.leak_scale * (HW_TABLE[labels.astype(np.uint8)].astype(np.float64) - 4.0)
        for idx in config.leak_indices:
            samples[:, idx] += leak
    if config.desync_max:
        for i in range(n):
            samples[i] = shift_samples(samples[i], int(offsets[i]))

    ts = TraceSet(samples, plaintexts, np.tile(key, (n, 1)), labels,
                  role=config.role, sample_frequency=config.sample_frequency)
    if return_meta:
        return ts, {"offsets": offsets, "masks": masks}
    return ts


def generate_pair(config, n_attack=1000, attack_seed=None):
    """Profiling set from ``config`` and an attack set under the same key
    drawn from an independent seed."""
    prof = generate(config)
    seed = config.seed + 1_000_003 if attack_seed is None else attack_seed
    att = generate(replace(config, n_traces=n_attack, seed=seed, role="attack"))
    return prof, att
