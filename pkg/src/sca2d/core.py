"""Domain types, AES helpers and labeling shared by the whole toolkit.

Traces are kept as float64 numpy arrays in memory. Images are numpy arrays
of shape ``(height, width, channels)`` (channel-last).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

SBOX = np.array([
    0x63, 0x7C, 0x77, 0x7B, 0xF2, 0x6B, 0x6F, 0xC5, 0x30, 0x01, 0x67, 0x2B, 0xFE, 0xD7, 0xAB, 0x76,
    0xCA, 0x82, 0xC9, 0x7D, 0xFA, 0x59, 0x47, 0xF0, 0xAD, 0xD4, 0xA2, 0xAF, 0x9C, 0xA4, 0x72, 0xC0,
    0xB7, 0xFD, 0x93, 0x26, 0x36, 0x3F, 0xF7, 0xCC, 0x34, 0xA5, 0xE5, 0xF1, 0x71, 0xD8, 0x31, 0x15,
    0x04, 0xC7, 0x23, 0xC3, 0x18, 0x96, 0x05, 0x9A, 0x07, 0x12, 0x80, 0xE2, 0xEB, 0x27, 0xB2, 0x75,
    0x09, 0x83, 0x2C, 0x1A, 0x1B, 0x6E, 0x5A, 0xA0, 0x52, 0x3B, 0xD6, 0xB3, 0x29, 0xE3, 0x2F, 0x84,
    0x53, 0xD1, 0x00, 0xED, 0x20, 0xFC, 0xB1, 0x5B, 0x6A, 0xCB, 0xBE, 0x39, 0x4A, 0x4C, 0x58, 0xCF,
    0xD0, 0xEF, 0xAA, 0xFB, 0x43, 0x4D, 0x33, 0x85, 0x45, 0xF9, 0x02, 0x7F, 0x50, 0x3C, 0x9F, 0xA8,
    0x51, 0xA3, 0x40, 0x8F, 0x92, 0x9D, 0x38, 0xF5, 0xBC, 0xB6, 0xDA, 0x21, 0x10, 0xFF, 0xF3, 0xD2,
    0xCD, 0x0C, 0x13, 0xEC, 0x5F, 0x97, 0x44, 0x17, 0xC4, 0xA7, 0x7E, 0x3D, 0x64, 0x5D, 0x19, 0x73,
    0x60, 0x81, 0x4F, 0xDC, 0x22, 0x2A, 0x90, 0x88, 0x46, 0xEE, 0xB8, 0x14, 0xDE, 0x5E, 0x0B, 0xDB,
    0xE0, 0x32, 0x3A, 0x0A, 0x49, 0x06, 0x24, 0x5C, 0xC2, 0xD3, 0xAC, 0x62, 0x91, 0x95, 0xE4, 0x79,
    0xE7, 0xC8, 0x37, 0x6D, 0x8D, 0xD5, 0x4E, 0xA9, 0x6C, 0x56, 0xF4, 0xEA, 0x65, 0x7A, 0xAE, 0x08,
    0xBA, 0x78, 0x25, 0x2E, 0x1C, 0xA6, 0xB4, 0xC6, 0xE8, 0xDD, 0x74, 0x1F, 0x4B, 0xBD, 0x8B, 0x8A,
    0x70, 0x3E, 0xB5, 0x66, 0x48, 0x03, 0xF6, 0x0E, 0x61, 0x35, 0x57, 0xB9, 0x86, 0xC1, 0x1D, 0x9E,
    0xE1, 0xF8, 0x98, 0x11, 0x69, 0xD9, 0x8E, 0x94, 0x9B, 0x1E, 0x87, 0xE9, 0xCE, 0x55, 0x28, 0xDF,
    0x8C, 0xA1, 0x89, 0x0D, 0xBF, 0xE6, 0x42, 0x68, 0x41, 0x99, 0x2D, 0x0F, 0xB0, 0x54, 0xBB, 0x16,
], dtype=np.uint8)

INV_SBOX = np.zeros(256, dtype=np.uint8)
INV_SBOX[SBOX] = np.arange(256, dtype=np.uint8)

HW_TABLE = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)

# Position whose ciphertext byte shares a register with byte i in the last
# round (inverse ShiftRows on a column-major state).
SHIFT_ROWS = (0, 5, 10, 15, 4, 9, 14, 3, 8, 13, 2, 7, 12, 1, 6, 11)


def hamming_weight(v):
    """Number of set bits of a byte (or elementwise over an integer array)."""
    if isinstance(v, (int, np.integer)):
        return int(HW_TABLE[int(v) & 0xFF])
    return HW_TABLE[np.asarray(v, dtype=np.uint8)]


def aes_sbox(v):
    if isinstance(v, (int, np.integer)):
        return int(SBOX[int(v) & 0xFF])
    return SBOX[np.asarray(v, dtype=np.uint8)]


def aes_inv_sbox(v):
    if isinstance(v, (int, np.integer)):
        return int(INV_SBOX[int(v) & 0xFF])
    return INV_SBOX[np.asarray(v, dtype=np.uint8)]


class TargetKind(str, enum.Enum):
    SBOX_OUTPUT = "sbox"
    CONSECUTIVE_SBOX_XOR = "sbox-xor"
    LAST_ROUND = "last-round"


@dataclass(frozen=True)
class IntermediateValueSpec:
    """Labeling function ``y = g(p, k)``.

    ``partner_index`` is the second byte involved for the two-byte targets:
    the next plaintext byte for ``CONSECUTIVE_SBOX_XOR`` (default
    ``byte_index + 1``) and the ciphertext byte XORed in for ``LAST_ROUND``
    (default: the ShiftRows partner of ``byte_index``).

    For ``LAST_ROUND`` the public bytes handed to the labeling functions are
    ciphertext bytes, and keys are last-round key bytes.
    """

    kind: TargetKind = TargetKind.SBOX_OUTPUT
    byte_index: int = 0
    partner_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TargetKind(self.kind))
        if not 0 <= self.byte_index <= 15:
            raise ValueError(f"byte_index must be in [0,15], got {self.byte_index}")
        if self.kind is TargetKind.CONSECUTIVE_SBOX_XOR and self.partner_index is None:
            if self.byte_index == 15:
                raise ValueError("sbox-xor needs byte_index <= 14 without an explicit partner")
            object.__setattr__(self, "partner_index", self.byte_index + 1)
        elif self.kind is TargetKind.LAST_ROUND and self.partner_index is None:
            object.__setattr__(self, "partner_index", SHIFT_ROWS[self.byte_index])
        if self.partner_index is not None and not 0 <= self.partner_index <= 15:
            raise ValueError(f"partner_index must be in [0,15], got {self.partner_index}")

    @property
    def attacked_byte(self):
        """Key byte recovered by an attack on this target.

        For the consecutive S-box XOR the partner key byte is the unknown and
        ``byte_index`` is assumed already recovered.
        """
        if self.kind is TargetKind.CONSECUTIVE_SBOX_XOR:
            return self.partner_index
        return self.byte_index

    def label(self, public, key):
        """Labels for full 16-byte public data / key arrays, shape ``(n,)``."""
        public = np.atleast_2d(np.asarray(public, dtype=np.uint8))
        key = np.asarray(key, dtype=np.uint8)
        if key.ndim == 1:
            key = np.broadcast_to(key, public.shape)
        i, j = self.byte_index, self.partner_index
        if self.kind is TargetKind.SBOX_OUTPUT:
            return SBOX[public[:, i] ^ key[:, i]]
        if self.kind is TargetKind.CONSECUTIVE_SBOX_XOR:
            return SBOX[public[:, i] ^ key[:, i]] ^ SBOX[public[:, j] ^ key[:, j]]
        return INV_SBOX[public[:, i] ^ key[:, i]] ^ public[:, j]

    def hypotheses(self, public, key=None):
        """Label of every trace under every candidate of the attacked byte.

        Returns a ``(n, 256)`` uint8 table. ``key`` is only consulted for the
        consecutive S-box XOR target, where the non-attacked key byte must be
        known.
        """
        public = np.atleast_2d(np.asarray(public, dtype=np.uint8))
        cand = np.arange(256, dtype=np.uint8)[None, :]
        i, j = self.byte_index, self.partner_index
        if self.kind is TargetKind.SBOX_OUTPUT:
            return SBOX[public[:, i, None] ^ cand]
        if self.kind is TargetKind.CONSECUTIVE_SBOX_XOR:
            if key is None:
                raise ValueError("sbox-xor hypotheses need the known key byte")
            key = np.asarray(key, dtype=np.uint8)
            known = key[i] if key.ndim == 1 else key[:, i]
            first = SBOX[public[:, i] ^ known]
            return first[:, None] ^ SBOX[public[:, j, None] ^ cand]
        return INV_SBOX[public[:, i, None] ^ cand] ^ public[:, j, None]


def label_trace(spec, public, key):
    """Derive the label of one trace from byte-level inputs.

    ``public``/``key`` are single bytes for the one-byte targets and
    2-tuples of bytes for the two-byte ones: ``(p1, p2)``/``(k1, k2)`` for the
    consecutive S-box XOR, ``(c_i, c_j)``/``k`` for the last-round target.
    """
    kind = TargetKind(spec.kind)
    if kind is TargetKind.SBOX_OUTPUT:
        return int(SBOX[(int(public) ^ int(key)) & 0xFF])
    if kind is TargetKind.CONSECUTIVE_SBOX_XOR:
        (p1, p2), (k1, k2) = public, key
        return int(SBOX[(p1 ^ k1) & 0xFF] ^ SBOX[(p2 ^ k2) & 0xFF])
    ci, cj = public
    return int(INV_SBOX[(ci ^ int(key)) & 0xFF] ^ (cj & 0xFF))


def min_max_rescale(x):
    """Affine map of ``x`` onto [-1, 1] (min -> -1, max -> +1)."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(axis=-1, keepdims=True), x.max(axis=-1, keepdims=True)
    span = hi - lo
    if np.any(span <= 0):
        raise ValueError("degenerate trace")
    out = (x - hi + (x - lo)) / span
    # pin the endpoints; the formula can miss them by one ulp
    out = np.where(x == lo, -1.0, out)
    out = np.where(x == hi, 1.0, out)
    return np.clip(out, -1.0, 1.0)


@dataclass(frozen=True)
class Trace:
    samples: np.ndarray
    plaintext: np.ndarray = field(default_factory=lambda: np.zeros(16, np.uint8))
    key: np.ndarray | None = None
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        object.__setattr__(self, "plaintext", np.asarray(self.plaintext, dtype=np.uint8))
        if self.key is not None:
            object.__setattr__(self, "key", np.asarray(self.key, dtype=np.uint8))
        if self.label is not None and not 0 <= int(self.label) <= 255:
            raise ValueError(f"label out of range: {self.label}")

    def __len__(self):
        return len(self.samples)


def extract_segment(trace, start, end):
    n = len(trace.samples)
    if not (0 <= start < end <= n):
        raise IndexError(f"segment [{start}, {end}) out of bounds for trace of length {n}")
    return replace(trace, samples=trace.samples[start:end].copy())


@dataclass
class TraceSet:
    """Column-oriented collection of traces sharing one sample count.

    ``samples`` has shape ``(n_traces, n_samples)``; ``plaintexts`` and
    ``keys`` are ``(n_traces, 16)`` uint8; ``keys``/``labels`` may be None
    (unknown key in an attack set, unlabeled data).
    """

    samples: np.ndarray
    plaintexts: np.ndarray
    keys: np.ndarray | None = None
    labels: np.ndarray | None = None
    role: str = "profiling"
    sample_frequency: float = 0.625e9

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2D array (n_traces, n_samples)")
        n = self.samples.shape[0]
        self.plaintexts = np.asarray(self.plaintexts, dtype=np.uint8).reshape(n, 16)
        if self.keys is not None:
            self.keys = np.asarray(self.keys, dtype=np.uint8).reshape(n, 16)
        if self.labels is not None:
            self.labels = np.asarray(self.labels).astype(np.int64).reshape(n)
            if np.any((self.labels < 0) | (self.labels > 255)):
                raise ValueError("labels must lie in [0,255]")
        if self.role not in ("profiling", "attack"):
            raise ValueError(f"role must be 'profiling' or 'attack', got {self.role!r}")
        if self.role == "profiling" and self.labels is None:
            raise ValueError("profiling sets need labels")

    @property
    def n_traces(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]

    def __len__(self):
        return self.n_traces

    def __getitem__(self, i):
        return Trace(
            self.samples[i],
            self.plaintexts[i],
            None if self.keys is None else self.keys[i],
            None if self.labels is None else int(self.labels[i]),
        )

    def __iter__(self):
        for i in range(self.n_traces):
            yield self[i]

    def subset(self, index, role=None):
        index = np.asarray(index)
        return TraceSet(
            self.samples[index],
            self.plaintexts[index],
            None if self.keys is None else self.keys[index],
            None if self.labels is None else self.labels[index],
            role=role or self.role,
            sample_frequency=self.sample_frequency,
        )

    def segment(self, start, end):
        if not (0 <= start < end <= self.n_samples):
            raise IndexError(
                f"segment [{start}, {end}) out of bounds for traces of length {self.n_samples}")
        return replace(self, samples=self.samples[:, start:end].copy())

    def relabel(self, spec):
        """Copy with labels recomputed from the stored public data and keys."""
        if self.keys is None:
            raise ValueError("cannot derive labels without keys")
        return replace(self, labels=spec.label(self.plaintexts, self.keys).astype(np.int64))

    @classmethod
    def from_traces(cls, traces, role="profiling", sample_frequency=0.625e9):
        traces = list(traces)
        if not traces:
            raise ValueError("empty trace list")
        lengths = {len(t) for t in traces}
        if len(lengths) != 1:
            raise ValueError(f"traces differ in length: {sorted(lengths)}")
        keys = None
        if all(t.key is not None for t in traces):
            keys = np.stack([t.key for t in traces])
        labels = None
        if all(t.label is not None for t in traces):
            labels = np.array([t.label for t in traces])
        return cls(
            np.stack([t.samples for t in traces]),
            np.stack([t.plaintext for t in traces]),
            keys, labels, role=role, sample_frequency=sample_frequency,
        )


def as_image(a):
    """Coerce a 2D or 3D array to a float64 ``(H, W, C)`` image."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"image must have 2 or 3 dimensions, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    return a
