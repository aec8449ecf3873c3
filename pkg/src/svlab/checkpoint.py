"""Binary parameter checkpoints.

Layout (little-endian): magic ``SVLB``, format version u32, tensor count
u32, then per tensor: name length u16 + UTF-8 name, rank u8, dims as u64s,
raw float64 payload in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError
from .tensor import Node, Tensor

MAGIC = b"SVLB"
VERSION = 1


def save_params(path, named_tensors) -> None:
    """Write an ordered mapping of name -> Tensor/Node to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(named_tensors)))
        for name, t in named_tensors.items():
            a = t.value.data if isinstance(t, Node) else t.data
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", a.ndim))
            f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
            f.write(a.astype("<f8").tobytes(order="C"))


def load_params(path) -> dict:
    """Read a checkpoint back as an ordered name -> Tensor dict."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    off = 12
    out: dict[str, Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        n = 1
        for d in dims:
            n *= d
        a = np.frombuffer(blob, dtype="<f8", count=n, offset=off)
        off += 8 * n
        out[name] = Tensor(a.reshape(dims))
    if off != len(blob):
        raise ParseError(f"{path}: {len(blob) - off} trailing bytes")
    return out
