"""Slow, loop-based reference implementations used as test oracles.

Nothing here imports the package under test, so agreement between the two
routes is meaningful.
"""

import cmath
import math

import numpy as np


def gf_mul(a, b):
    p = 0
    for _ in range(8):
        if b & 1:
            p ^= a
        carry = a & 0x80
        a = (a << 1) & 0xFF
        if carry:
            a ^= 0x1B
        b >>= 1
    return p


def gf_inv(a):
    if a == 0:
        return 0
    # a^254 = a^-1 in GF(2^8)
    r, base, e = 1, a, 254
    while e:
        if e & 1:
            r = gf_mul(r, base)
        base = gf_mul(base, base)
        e >>= 1
    return r


def aes_sbox_entry(v):
    """Multiplicative inverse followed by the AES affine map."""
    b = gf_inv(v)
    out = 0
    for i in range(8):
        bit = ((b >> i) ^ (b >> ((i + 4) % 8)) ^ (b >> ((i + 5) % 8))
               ^ (b >> ((i + 6) % 8)) ^ (b >> ((i + 7) % 8)) ^ (0x63 >> i)) & 1
        out |= bit << i
    return out


def popcount(v):
    n = 0
    while v:
        n += v & 1
        v >>= 1
    return n


def rescale(x):
    lo, hi = min(x), max(x)
    return [((v - hi) + (v - lo)) / (hi - lo) for v in x]


def gasf(x):
    xs = rescale(list(x))
    phi = [math.acos(max(-1.0, min(1.0, v))) for v in xs]
    return [[math.cos(a + b) for b in phi] for a in phi]


def gadf(x):
    xs = rescale(list(x))
    phi = [math.acos(max(-1.0, min(1.0, v))) for v in xs]
    return [[math.sin(a - b) for b in phi] for a in phi]


def quantile(sorted_vals, q):
    """Linear-interpolation quantile (type 7)."""
    pos = (len(sorted_vals) - 1) * q
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (pos - lo) * (sorted_vals[hi] - sorted_vals[lo])


def mtf(x, Q):
    s = sorted(x)
    edges = [quantile(s, k / Q) for k in range(1, Q)]
    bins = [sum(1 for e in edges if v > e) for v in x]
    W = [[0.0] * Q for _ in range(Q)]
    for a, b in zip(bins[:-1], bins[1:]):
        W[a][b] += 1
    for row in W:
        tot = sum(row)
        if tot:
            for j in range(Q):
                row[j] /= tot
    return [[W[bi][bj] for bj in bins] for bi in bins], W


def recurrence(x, m=1, tau=1):
    n = len(x) - (m - 1) * tau
    traj = [[x[i + k * tau] for k in range(m)] for i in range(n)]
    return [[math.sqrt(sum((a - b) ** 2 for a, b in zip(traj[i], traj[j]))) for j in range(n)]
            for i in range(n)]


def dft(x):
    n = len(x)
    return [sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n)) for k in range(n)]


def stft(x, L=8, hop=1):
    pad = L // 2
    xp = [0.0] * pad + list(x) + [0.0] * pad
    w = [0.5 * (1 - math.cos(2 * math.pi * n / (L - 1))) for n in range(L)]
    out = []
    n_frames = -(-len(x) // hop)
    for f in range(n_frames):
        frame = [xp[f * hop + n] * w[n] for n in range(L)]
        spec = dft(frame)
        out.append([abs(spec[k]) for k in range(L // 2 + 1)])
    return out


def conv2d(x, k, b=None):
    """Valid cross-correlation, x (B,H,W,C), k (kh,kw,C,F)."""
    B, H, W, C = x.shape
    kh, kw, _, F = k.shape
    out = np.zeros((B, H - kh + 1, W - kw + 1, F))
    for n in range(B):
        for i in range(H - kh + 1):
            for j in range(W - kw + 1):
                for f in range(F):
                    s = 0.0
                    for di in range(kh):
                        for dj in range(kw):
                            for c in range(C):
                                s += x[n, i + di, j + dj, c] * k[di, dj, c, f]
                    out[n, i, j, f] = s + (0.0 if b is None else b[f])
    return out


def maxpool(x, p, s):
    B, H, W, C = x.shape
    ho, wo = (H - p) // s + 1, (W - p) // s + 1
    out = np.zeros((B, ho, wo, C))
    for n in range(B):
        for i in range(ho):
            for j in range(wo):
                for c in range(C):
                    out[n, i, j, c] = max(x[n, i * s + a, j * s + bb, c]
                                          for a in range(p) for bb in range(p))
    return out


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    num = sum((u - ma) * (v - mb) for u, v in zip(a, b))
    da = math.sqrt(sum((u - ma) ** 2 for u in a))
    db = math.sqrt(sum((v - mb) ** 2 for v in b))
    return num / (da * db)


def key_rank(scores, k_true):
    """Pessimistic rank by sorting: the true key goes behind every tie."""
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], k == k_true))
    return order.index(k_true) + 1


def gaussian_kernel(sigma):
    r = math.ceil(3 * sigma)
    w = [math.exp(-(i * i) / (2 * sigma * sigma)) for i in range(-r, r + 1)]
    s = sum(w)
    return [v / s for v in w]
