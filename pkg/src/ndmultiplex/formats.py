"""File codecs: CSV tables and matrices, JSON documents, FRS1 stacks, PGM/PPM maps.

Floats in CSV use ``%.17g`` so values round-trip exactly. JSON is written
with sorted keys and a trailing newline so identical inputs give identical
bytes.

FRS1 layout (all little-endian)::

    offset  size  field
    0       4     magic b"FRS1"
    4       4     u32 width
    8       4     u32 height
    12      4     u32 n_frames
    16      4     u32 reserved (0)
    20      4     u32 header-extension length L
    24      L     extension: UTF-8 JSON metadata (pixel pitch), may be empty
    24+L    8*n   float64 frame times (s)
    ...     4*n*h*w  float32 voxels, frame-major then row-major
"""

import csv
import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .dynamics import SignalMatrix
from .errors import ValidationError
from .phantom import FrameStack

__all__ = [
    "FRS1_MAGIC",
    "write_frs1",
    "read_frs1",
    "write_dense_csv",
    "read_dense_csv",
    "write_signal_matrix_csv",
    "read_signal_matrix_csv",
    "write_table_csv",
    "read_table_csv",
    "write_json",
    "read_json",
    "write_pgm",
    "write_ppm",
    "read_pnm",
    "fraction_to_gray",
    "overlay_rgb",
    "sha256_file",
]

FRS1_MAGIC = b"FRS1"
_HEADER = struct.Struct("<4sIIIII")


def _fmt(v):
    return "%.17g" % v


def write_frs1(path, stack):
    """Write a :class:`FrameStack` as FRS1."""
    ext = json.dumps({"pixel_pitch_mm": stack.pixel_pitch_mm}, sort_keys=True).encode()
    n, h, w = stack.voxels.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FRS1_MAGIC, w, h, n, 0, len(ext)))
        fh.write(ext)
        fh.write(np.asarray(stack.frame_times_s, dtype="<f8").tobytes())
        fh.write(np.asarray(stack.voxels, dtype="<f4").tobytes(order="C"))


def read_frs1(path):
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"{path}: truncated FRS1 header")
    magic, w, h, n, _reserved, ext_len = _HEADER.unpack_from(data)
    if magic != FRS1_MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    pos = _HEADER.size
    meta = {}
    if ext_len:
        try:
            meta = json.loads(data[pos:pos + ext_len].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ValidationError(f"{path}: unreadable header extension") from exc
    pos += ext_len
    expected = pos + 8 * n + 4 * n * h * w
    if len(data) != expected:
        raise ValidationError(f"{path}: size {len(data)} does not match header ({expected})")
    times = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(float)
    pos += 8 * n
    vox = np.frombuffer(data, dtype="<f4", count=n * h * w, offset=pos).reshape(n, h, w)
    return FrameStack(vox.astype(np.float32), times, float(meta.get("pixel_pitch_mm", 0.1)))


def write_dense_csv(path, M):
    """Headerless CSV, one matrix row per line."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in M:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_dense_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for line in csv.reader(fh):
            if line:
                rows.append([float(v) for v in line])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: empty or ragged matrix")
    return np.array(rows)


def write_signal_matrix_csv(path, S):
    """``t_s,<label1>,...`` header, one row per frame (transposed for reading)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(("t_s",) + S.labels) + "\n")
        for t, col in zip(S.frame_times_s, S.values.T):
            fh.write(",".join([_fmt(t)] + [_fmt(v) for v in col]) + "\n")


def read_signal_matrix_csv(path):
    header, cols = read_table_csv(path)
    if not header or header[0] != "t_s":
        raise ValidationError(f"{path}: first column must be t_s")
    return SignalMatrix(np.vstack(cols[1:]), header[1:], cols[0])


def write_table_csv(path, header, columns):
    """Column-oriented CSV with a header row. Integers stay integers."""
    columns = [list(c) for c in columns]
    if len({len(c) for c in columns}) > 1:
        raise ValidationError("table columns differ in length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(str(v) if isinstance(v, (int, np.integer, str)) else _fmt(v)
                              for v in row) + "\n")


def read_table_csv(path):
    """Header plus one array per column; non-numeric columns come back as str."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty CSV") from None
        rows = [r for r in reader if r]
    if any(len(r) != len(header) for r in rows):
        raise ValidationError(f"{path}: row length does not match header")
    cols = []
    for i in range(len(header)):
        raw = [r[i] for r in rows]
        try:
            cols.append(np.array([float(v) for v in raw]))
        except ValueError:
            # label columns (e.g. stack names) stay as strings
            cols.append(np.array(raw, dtype=str))
    return header, cols


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps(doc):
    return json.dumps(doc, sort_keys=True, indent=2, default=_jsonable) + "\n"


def write_json(path, doc):
    Path(path).write_text(dumps(doc))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def fraction_to_gray(frac):
    """Map fractions in [0, 1] linearly to 0..255; NaN becomes 0."""
    f = np.asarray(frac, dtype=float)
    g = np.rint(np.clip(np.nan_to_num(f, nan=0.0), 0.0, 1.0) * 255.0)
    return g.astype(np.uint8)


# ND28 drawn blue, ND56 yellow
_BLUE = np.array([0.0, 0.0, 255.0])
_YELLOW = np.array([255.0, 255.0, 0.0])


def overlay_rgb(c28, c56):
    """Two-colour overlay: hue from the ND56 share, brightness from total droplet signal."""
    c28 = np.clip(np.nan_to_num(np.asarray(c28, float)), 0, None)
    c56 = np.clip(np.nan_to_num(np.asarray(c56, float)), 0, None)
    tot = c28 + c56
    peak = tot.max()
    if peak <= 0:
        return np.zeros(tot.shape + (3,), dtype=np.uint8)
    share = np.divide(c56, tot, out=np.zeros_like(tot), where=tot > 0)
    rgb = (tot / peak)[..., None] * ((1 - share)[..., None] * _BLUE + share[..., None] * _YELLOW)
    return np.rint(np.clip(rgb, 0, 255)).astype(np.uint8)


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())


def read_pnm(path):
    """Read a binary PGM (P5) or PPM (P6) written by this module."""
    data = Path(path).read_bytes()
    buf = io.BytesIO(data)
    magic = buf.readline().strip()
    w, h = (int(v) for v in buf.readline().split())
    buf.readline()
    raw = np.frombuffer(buf.read(), dtype=np.uint8)
    if magic == b"P5":
        return raw.reshape(h, w)
    if magic == b"P6":
        return raw.reshape(h, w, 3)
    raise ValidationError(f"{path}: unsupported PNM type {magic!r}")


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
