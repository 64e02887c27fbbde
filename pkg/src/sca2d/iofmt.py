"""Binary containers for traces (SCTR), images (SCIM) and network
checkpoints (SCNN), plus PGM and CSV export.

All integers are little-endian. Samples and pixels are stored as f32,
checkpoint parameters as f64. Every reader checks the magic, the version
and that the payload length matches the header exactly.
"""

from __future__ import annotations

import io
import json
import os
import struct
import tempfile

import numpy as np

from .core import TraceSet
from .imaging import rescale_01
from .nn.network import Network

VERSION = 1

SCTR_HEADER = struct.Struct("<4sHIIdBB")
SCIM_HEADER = struct.Struct("<4sHIHHHB")
SCNN_HEADER = struct.Struct("<4sHI")


class FormatError(ValueError):
    """Base class for unreadable containers; ``code`` doubles as exit status."""

    code = 10


class BadMagicError(FormatError):
    code = 11


class VersionError(FormatError):
    code = 12


class TruncatedError(FormatError):
    code = 13


class TrailingDataError(FormatError):
    code = 14


def atomic_write(path, data):
    """Write ``data`` (bytes or str) to ``path`` via a temp file and rename."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_bytes(src):
    if isinstance(src, (bytes, bytearray, memoryview)):
        return bytes(src)
    with open(src, "rb") as fh:
        return fh.read()


def _check_header(buf, header, magic):
    if len(buf) < 4 or buf[:4] != magic:
        raise BadMagicError(f"bad magic: expected {magic!r}, found {bytes(buf[:4])!r}")
    if len(buf) < header.size:
        raise TruncatedError(f"truncated payload: header needs {header.size} bytes, "
                             f"file has {len(buf)}")
    fields = header.unpack_from(buf)
    if fields[1] != VERSION:
        raise VersionError(f"version mismatch: file has version {fields[1]}, "
                           f"reader supports {VERSION}")
    return fields


def _check_length(buf, expected):
    if len(buf) < expected:
        raise TruncatedError(f"truncated payload: expected {expected} bytes, got {len(buf)}")
    if len(buf) > expected:
        raise TrailingDataError(f"{len(buf) - expected} trailing bytes after payload")


# ---- SCTR -------------------------------------------------------------------

def _sctr_dtype(n_samples, has_key, has_label):
    fields = [("plaintext", "u1", (16,))]
    if has_key:
        fields.append(("key", "u1", (16,)))
    if has_label:
        fields.append(("label", "u1"))
    fields.append(("samples", "<f4", (n_samples,)))
    return np.dtype(fields)


def encode_sctr(ts):
    has_key = ts.keys is not None
    has_label = ts.labels is not None
    rec = np.zeros(ts.n_traces, dtype=_sctr_dtype(ts.n_samples, has_key, has_label))
    rec["plaintext"] = ts.plaintexts
    if has_key:
        rec["key"] = ts.keys
    if has_label:
        rec["label"] = ts.labels
    rec["samples"] = ts.samples
    head = SCTR_HEADER.pack(b"SCTR", VERSION, ts.n_traces, ts.n_samples,
                            float(ts.sample_frequency), int(has_key), int(has_label))
    return head + rec.tobytes()


def decode_sctr(buf, role=None):
    _, _, n, n_samples, fs, has_key, has_label = _check_header(buf, SCTR_HEADER, b"SCTR")
    dt = _sctr_dtype(n_samples, has_key, has_label)
    _check_length(buf, SCTR_HEADER.size + n * dt.itemsize)
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=SCTR_HEADER.size)
    if role is None:
        role = "profiling" if has_label else "attack"
    return TraceSet(
        rec["samples"].astype(np.float64),
        rec["plaintext"].copy(),
        rec["key"].copy() if has_key else None,
        rec["label"].astype(np.int64) if has_label else None,
        role=role,
        sample_frequency=fs,
    )


def write_sctr(path, ts):
    atomic_write(path, encode_sctr(ts))


def read_sctr(path, role=None):
    return decode_sctr(_read_bytes(path), role)


# ---- SCIM -------------------------------------------------------------------

def encode_scim(images, labels=None):
    """``images`` is ``(count, H, W, C)`` (or ``(count, H, W)``)."""
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4:
        raise ValueError("images must have shape (count, H, W[, C])")
    count, h, w, c = x.shape
    if max(h, w, c) > 0xFFFF:
        raise ValueError("image dimensions exceed the u16 header fields")
    fields = []
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (count,) or np.any((labels < 0) | (labels > 255)):
            raise ValueError("need one label in [0,255] per image")
        fields.append(("label", "u1"))
    fields.append(("pixels", "<f4", (h, w, c)))
    rec = np.zeros(count, dtype=np.dtype(fields))
    if labels is not None:
        rec["label"] = labels
    rec["pixels"] = x
    head = SCIM_HEADER.pack(b"SCIM", VERSION, count, h, w, c, int(labels is not None))
    return head + rec.tobytes()


def decode_scim(buf):
    """Returns ``(images (count,H,W,C) float64, labels or None)``."""
    _, _, count, h, w, c, has_label = _check_header(buf, SCIM_HEADER, b"SCIM")
    fields = [("label", "u1")] if has_label else []
    fields.append(("pixels", "<f4", (h, w, c)))
    dt = np.dtype(fields)
    _check_length(buf, SCIM_HEADER.size + count * dt.itemsize)
    rec = np.frombuffer(buf, dtype=dt, count=count, offset=SCIM_HEADER.size)
    images = rec["pixels"].astype(np.float64).reshape(count, h, w, c)
    labels = rec["label"].astype(np.int64) if has_label else None
    return images, labels


def write_scim(path, images, labels=None):
    atomic_write(path, encode_scim(images, labels))


def read_scim(path):
    return decode_scim(_read_bytes(path))


# ---- SCNN -------------------------------------------------------------------

def encode_scnn(net):
    """Layer specs and array shapes go into a JSON block; the arrays
    follow as f64 in declaration order."""
    arrays = net.state_arrays()
    meta = {
        "input_shape": list(net.input_shape),
        "layers": net.spec(),
        "arrays": [[i, name, list(arr.shape)] for i, name, arr in arrays],
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, _, arr in arrays)
    return SCNN_HEADER.pack(b"SCNN", VERSION, len(blob)) + blob + body


def decode_scnn(buf):
    _, _, n_meta = _check_header(buf, SCNN_HEADER, b"SCNN")
    start = SCNN_HEADER.size
    if len(buf) < start + n_meta:
        raise TruncatedError(f"truncated payload: layer block needs {n_meta} bytes")
    try:
        meta = json.loads(buf[start:start + n_meta].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt layer block: {exc}") from exc
    shapes = [tuple(s) for _, _, s in meta["arrays"]]
    sizes = [int(np.prod(s, dtype=np.int64)) for s in shapes]
    offset = start + n_meta
    _check_length(buf, offset + 8 * sum(sizes))
    net = Network.from_spec(meta["layers"], meta["input_shape"]).build(0)
    expected = [(i, name, arr.shape) for i, name, arr in net.state_arrays()]
    if [(i, n, tuple(s)) for (i, n, _), s in zip(meta["arrays"], shapes)] != expected:
        raise FormatError("array table does not match the layer specs")
    for (i, name, _), shape, size in zip(meta["arrays"], shapes, sizes):
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=offset).reshape(shape)
        layer = net.layers[i]
        target = layer.params if name in layer.params else layer.state
        target[name] = arr.astype(np.float64)
        offset += 8 * size
    return net


def write_scnn(path, net):
    atomic_write(path, encode_scnn(net))


def read_scnn(path):
    return decode_scnn(_read_bytes(path))


# ---- export -----------------------------------------------------------------

def export_pgm(img, channel=0):
    """Binary P5 greyscale bytes of one channel after rescaling to [0,1]."""
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., channel]
    if x.ndim != 2:
        raise ValueError("expected a 2D image or an (H, W, C) stack")
    pix = np.rint(rescale_01(x) * 255.0).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def read_pgm(src):
    buf = _read_bytes(src)
    parts = buf.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise BadMagicError("not a binary P5 PGM")
    w, h = (int(v) for v in parts[1].split())
    pix = np.frombuffer(parts[3], dtype=np.uint8)
    if pix.size != w * h:
        raise TruncatedError(f"truncated payload: expected {w * h} pixels, got {pix.size}")
    return pix.reshape(h, w)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def export_csv(header, rows):
    """Comma-separated text with a header row and '\\n' line ends."""
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of length {len(row)} under a {len(header)}-column header")
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def curve_csv(trace_counts, ranks):
    """Single key-rank curve."""
    return export_csv(["traces", "rank"], zip(trace_counts, ranks))


def map_csv(cmap):
    """Correlation map as one row per sample (1D) or pixel (2D/3D)."""
    vals = np.asarray(cmap.values)
    deg = np.asarray(cmap.degenerate)
    if vals.ndim == 1:
        return export_csv(["index", "rho", "degenerate"],
                          ((i, vals[i], deg[i]) for i in range(vals.size)))
    if vals.ndim == 2:
        vals = vals[..., None]
        deg = deg[..., None]
    rows = ((r, c, ch, vals[r, c, ch], deg[r, c, ch]) for r, c, ch in np.ndindex(vals.shape))
    return export_csv(["row", "col", "channel", "rho", "degenerate"], rows)


def history_csv(history):
    keys = ["epoch", "train_loss", "val_loss"]
    return export_csv(keys, ([h[k] for k in keys] for h in history))


def parse_csv(text):
    """Split text written by :func:`export_csv` into ``(header, rows)`` of strings."""
    lines = text.rstrip("\n").split("\n")
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
