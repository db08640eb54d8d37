"""
Readers and writers for the two binary interchange formats.

VOXG (feature / label grids)::

    "VOXG" | u8 version=1 | u8 dtype (1=f32, 2=f64, 3=u16) | u32 w, h, d, c | data

VORD (orderings)::

    "VORD" | u8 version=1 | u8 scheme code | u8 z_snake | u32 w, h, d | N x u64 seq_to_linear

Everything is little-endian. Grid data is laid out voxel by voxel in linear
index order ``x + w * (y + h * z)`` with channels contiguous. Malformed input
raises :class:`~voxseq.exceptions.FormatError` with the offending byte offset.
"""
import struct

import numpy as np

from ..exceptions import ContractError, FormatError
from ..grid import FeatureGrid, GridDims
from ..ordering import Ordering, OrderingScheme, Scheme

VERSION = 1

GRID_MAGIC = b'VOXG'
GRID_HEADER = struct.Struct('<4sBBIIII')
GRID_DTYPES = {1: np.dtype('<f4'), 2: np.dtype('<f8'), 3: np.dtype('<u2')}
LABEL_DTYPE_CODE = 3

ORDER_MAGIC = b'VORD'
ORDER_HEADER = struct.Struct('<4sBBBIII')


def _dtype_code(dtype):
    dtype = np.dtype(dtype)
    for code, candidate in GRID_DTYPES.items():
        if candidate == dtype.newbyteorder('<'):
            return code
    raise ContractError(f"VOXG stores float32, float64 or uint16 data, not {dtype}")


def _check_header(data, header, magic):
    if len(data) < header.size:
        raise FormatError(f"truncated header: {len(data)} of {header.size} bytes", len(data))
    fields = header.unpack_from(data)
    if fields[0] != magic:
        raise FormatError(f"bad magic {fields[0]!r}, expected {magic!r}", 0)
    if fields[1] != VERSION:
        raise FormatError(f"unsupported version {fields[1]}", 4)
    return fields


def _payload(data, offset, dtype, count):
    expected = offset + count * dtype.itemsize
    if len(data) < expected:
        raise FormatError(f"truncated payload: expected {expected} bytes, got {len(data)}", len(data))
    if len(data) > expected:
        raise FormatError(f"{len(data) - expected} trailing bytes after payload", expected)
    return np.frombuffer(data, dtype=dtype, count=count, offset=offset)


# --- VOXG ---------------------------------------------------------------------

def encode_grid(grid, dtype=None):
    """Serialize a :class:`FeatureGrid` (cast to ``dtype`` when given)."""
    dtype = np.dtype(dtype or grid.dtype)
    code = _dtype_code(dtype)
    dims = grid.dims
    header = GRID_HEADER.pack(GRID_MAGIC, VERSION, code, dims.w, dims.h, dims.d, dims.c)
    return header + np.ascontiguousarray(grid.values, dtype=GRID_DTYPES[code]).tobytes()


def decode_grid(data, expect_dtype=None):
    """Parse VOXG bytes; ``expect_dtype`` rejects files holding another dtype."""
    _, _, code, w, h, d, c = _check_header(data, GRID_HEADER, GRID_MAGIC)
    if code not in GRID_DTYPES:
        raise FormatError(f"unknown dtype code {code}", 5)
    dtype = GRID_DTYPES[code]
    if expect_dtype is not None and dtype != np.dtype(expect_dtype).newbyteorder('<'):
        raise FormatError(f"file holds {dtype}, expected {np.dtype(expect_dtype)}", 5)
    try:
        dims = GridDims(w, h, d, c)
    except ContractError as exc:
        raise FormatError(f"invalid dims in header: {exc}", 6) from None
    values = _payload(data, GRID_HEADER.size, dtype, dims.voxels * c)
    return FeatureGrid(values.reshape(dims.shape + (c,)).astype(dtype.newbyteorder('=')))


def write_grid(path, grid, dtype=None):
    with open(path, 'wb') as fh:
        fh.write(encode_grid(grid, dtype))


def read_grid(path, expect_dtype=None):
    with open(path, 'rb') as fh:
        grid = decode_grid(fh.read(), expect_dtype)
    if grid.dtype == np.uint16 and expect_dtype is None:
        raise FormatError("file holds a label grid (u16), use read_labels", 5)
    return grid


def write_labels(path, labels):
    """Write a ``(d, h, w)`` label volume as a one-channel u16 grid."""
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise ContractError(f"labels must be a (d, h, w) volume, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > np.iinfo(np.uint16).max):
        raise ContractError("label values must fit in u16")
    write_grid(path, FeatureGrid(labels[..., None].astype(np.uint16)))


def read_labels(path):
    with open(path, 'rb') as fh:
        grid = decode_grid(fh.read(), expect_dtype=np.uint16)
    if grid.dims.c != 1:
        raise FormatError(f"label files have one channel, got {grid.dims.c}", 18)
    return grid.values[..., 0]


# --- VORD ---------------------------------------------------------------------

def encode_ordering(ordering):
    dims = ordering.dims
    header = ORDER_HEADER.pack(ORDER_MAGIC, VERSION, ordering.scheme.kind.code, int(ordering.scheme.z_snake),
                               dims.w, dims.h, dims.d)
    return header + ordering.seq_to_linear.astype('<u8').tobytes()


def decode_ordering(data):
    _, _, code, z_snake, w, h, d = _check_header(data, ORDER_HEADER, ORDER_MAGIC)
    try:
        kind = Scheme.from_code(code)
    except ContractError:
        raise FormatError(f"unknown scheme code {code}", 5) from None
    if z_snake not in (0, 1):
        raise FormatError(f"z_snake flag must be 0 or 1, got {z_snake}", 6)
    try:
        scheme = OrderingScheme(kind, bool(z_snake))
        dims = GridDims(w, h, d)
    except ContractError as exc:
        raise FormatError(str(exc), 5) from None
    entries = _payload(data, ORDER_HEADER.size, np.dtype('<u8'), dims.voxels)
    if entries.size and entries.max() >= dims.voxels:
        raise FormatError("entry outside the grid", ORDER_HEADER.size + 8 * int(entries.argmax()))
    try:
        return Ordering(scheme, dims, entries.astype(np.int64))
    except ContractError as exc:
        raise FormatError(str(exc), ORDER_HEADER.size) from None


def write_ordering(path, ordering):
    with open(path, 'wb') as fh:
        fh.write(encode_ordering(ordering))


def read_ordering(path):
    with open(path, 'rb') as fh:
        return decode_ordering(fh.read())
