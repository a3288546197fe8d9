"""Checkpoint, mask and CSV files.

Binary layout (all integers 32-bit little-endian unsigned)::

    magic        4 bytes, b"VARW" (weights) or b"VARM" (masks)
    version      u32 (currently 1)
    count        u32, number of entries
    per entry:
      name_len   u32, then name_len bytes of UTF-8
      rank       u32, then rank extents as u32
      payload    float32 LE values (weights) or one byte per value in {0, 1} (masks)

Checkpoints do not store prunable flags; entries ending in ``.weight``
are marked prunable on load.
"""

import csv
import struct

import numpy as np

from .errors import FormatError
from .model import ParamSet

VERSION = 1
WEIGHT_MAGIC = b"VARW"
MASK_MAGIC = b"VARM"


def _header(magic, count):
    return magic + struct.pack("<II", VERSION, count)


def _entry_header(name, shape):
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw + struct.pack("<I", len(shape)) + struct.pack(f"<{len(shape)}I", *shape)


def encode_checkpoint(params):
    parts = [_header(WEIGHT_MAGIC, len(params))]
    for e in params:
        parts.append(_entry_header(e.name, e.value.shape))
        parts.append(np.ascontiguousarray(e.value, dtype="<f4").tobytes())
    return b"".join(parts)


def encode_mask(mask):
    parts = [_header(MASK_MAGIC, len(mask))]
    for name, m in mask.items():
        if not np.all((m == 0) | (m == 1)):
            raise ValueError(f"mask {name} has values outside {{0, 1}}")
        parts.append(_entry_header(name, m.shape))
        parts.append(np.ascontiguousarray(m, dtype=np.uint8).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def _decode(data, magic, itemsize, dtype):
    r = _Reader(data)
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}", offset=0)
    version = r.u32("version")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}", offset=4)
    count = r.u32("entry count")
    entries = []
    for _ in range(count):
        start = r.pos
        name_len = r.u32("name length")
        try:
            name = r.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("entry name is not valid UTF-8", offset=start + 4) from None
        rank = r.u32("rank")
        shape = tuple(r.u32("extent") for _ in range(rank))
        n = int(np.prod(shape, dtype=np.int64))
        at = r.pos
        arr = np.frombuffer(r.take(n * itemsize, "payload"), dtype=dtype).reshape(shape).copy()
        entries.append((name, arr, at))
    if r.pos != len(data):
        raise FormatError("trailing bytes after last entry", offset=r.pos)
    return entries


def decode_checkpoint(data):
    params = ParamSet()
    for name, arr, _ in _decode(data, WEIGHT_MAGIC, 4, "<f4"):
        params.add(name, arr.astype(np.float32), prunable=name.endswith(".weight"))
    return params


def decode_mask(data):
    mask = {}
    for name, arr, at in _decode(data, MASK_MAGIC, 1, np.uint8):
        if arr.size and arr.max() > 1:
            raise FormatError(f"mask {name} holds values other than 0/1", offset=at)
        mask[name] = arr
    return mask


def save_checkpoint(params, path):
    with open(path, "wb") as f:
        f.write(encode_checkpoint(params))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())


def save_mask(mask, path):
    with open(path, "wb") as f:
        f.write(encode_mask(mask))


def load_mask(path):
    with open(path, "rb") as f:
        return decode_mask(f.read())


TRAIN_LOG_HEADER = ["epoch", "train_loss", "psi", "lr", "var_w", "eval_metric"]
SWEEP_HEADER = ["method", "lambda", "seed", "prune_rate", "metric_name", "metric_value", "var_w", "dense_metric"]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "count"]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_train_log(path, record):
    write_csv(path, TRAIN_LOG_HEADER,
              [(r.epoch, r.train_loss, r.psi, r.lr, r.var_w, r.eval_metric) for r in record.rows])


def write_histogram(path, hist):
    write_csv(path, HISTOGRAM_HEADER, hist.rows())
