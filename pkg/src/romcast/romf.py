"""ROMF container: a minimal little-endian file format for named f64 arrays.

Layout: magic ``ROMF``, format version (u32), then a sequence of records,
each ``name_len:u32, name:utf-8, dtype_code:u32, rank:u32, dims:u32...,
payload`` with the payload stored as little-endian float64.
"""

import struct

import numpy as np

from .errors import RomcastError

MAGIC = b"ROMF"
VERSION = 1
DTYPE_F64 = 0

_U32 = struct.Struct("<I")


class FormatError(RomcastError):
    """File is not a valid ROMF container."""


def write_arrays(path, arrays):
    """Write an ordered mapping of name -> ndarray to ``path``.

    All arrays are stored as little-endian float64; order is preserved.
    """
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        for name, arr in arrays.items():
            data = np.asarray(arr, dtype="<f8")  # tobytes() serialises C-order
            encoded = name.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_U32.pack(DTYPE_F64))
            fh.write(_U32.pack(data.ndim))
            for dim in data.shape:
                fh.write(_U32.pack(dim))
            fh.write(data.tobytes())


def read_arrays(path):
    """Read a ROMF container back into a dict of name -> float64 ndarray."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        version = _read_u32(fh, path)
        if version != VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        arrays = {}
        while True:
            head = fh.read(4)
            if not head:
                return arrays
            if len(head) != 4:
                raise FormatError(f"{path}: truncated record header")
            name_len = _U32.unpack(head)[0]
            name = fh.read(name_len).decode("utf-8")
            dtype_code = _read_u32(fh, path)
            if dtype_code != DTYPE_F64:
                raise FormatError(f"{path}: unknown dtype code {dtype_code}")
            rank = _read_u32(fh, path)
            dims = tuple(_read_u32(fh, path) for _ in range(rank))
            count = 1
            for dim in dims:
                count *= dim
            payload = fh.read(8 * count)
            if len(payload) != 8 * count:
                raise FormatError(f"{path}: truncated payload for {name!r}")
            arrays[name] = np.frombuffer(payload, dtype="<f8").astype(
                np.float64
            ).reshape(dims)


def _read_u32(fh, path):
    raw = fh.read(4)
    if len(raw) != 4:
        raise FormatError(f"{path}: unexpected end of file")
    return _U32.unpack(raw)[0]
