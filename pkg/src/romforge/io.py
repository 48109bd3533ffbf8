"""Atomic file writes and the little-endian binary containers.

Containers share a layout: 4-byte magic, ``u32`` version, then a
format-specific header and row-major ``float64`` payloads.
"""

import os
import struct
import tempfile

import numpy as np

from romforge.errors import ContractError

__all__ = ["atomic_write_bytes", "atomic_write_text", "write_matrix_file", "read_matrix_file"]

VERSION = 1


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def pack_header(magic, *u32):
    if len(magic) != 4:
        raise ValueError("magic must be 4 bytes")
    return magic + struct.pack("<" + "I" * (1 + len(u32)), VERSION, *u32)


def check_magic(buf, magic):
    if buf[:4] != magic:
        raise ContractError(f"bad magic {buf[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise ContractError(f"unsupported version {version}")
    return 8


def f64_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def write_matrix_file(path, magic, matrices):
    """Write 2-D arrays as ``magic, version, count, (rows, cols, data)*``."""
    parts = [pack_header(magic, len(matrices))]
    for m in matrices:
        m = np.atleast_2d(np.asarray(m, dtype=float))
        parts.append(struct.pack("<II", *m.shape))
        parts.append(f64_bytes(m))
    atomic_write_bytes(path, b"".join(parts))


def read_matrix_file(path, magic):
    with open(path, "rb") as fh:
        buf = fh.read()
    off = check_magic(buf, magic)
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    out = []
    for _ in range(count):
        r, c = struct.unpack_from("<II", buf, off)
        off += 8
        out.append(np.frombuffer(buf, dtype="<f8", count=r * c, offset=off).reshape(r, c).copy())
        off += 8 * r * c
    return out
