"""
Hilbert and Morton (Z-order) curve codecs in two and three dimensions.

All functions accept Python ints or integer numpy arrays and work elementwise.
Scalar inputs give a Python int (or a tuple of ints) back, array inputs give
``uint64`` arrays. Hilbert codecs use the Gray-code transpose construction:
coordinates are transformed in place into the "transpose" of the curve index,
whose bits are then interleaved axis 0 first.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import RangeError

MAX_BITS_PER_AXIS = 21

_U1 = np.uint64(1)


@dataclass(frozen=True)
class CurveOrder:
    """Recursion depth of a curve; the grid side is ``2 ** bits_per_axis``."""
    bits_per_axis: int

    def __post_init__(self):
        if not isinstance(self.bits_per_axis, (int, np.integer)) or isinstance(self.bits_per_axis, bool):
            raise RangeError(f"bits_per_axis must be an integer, got {self.bits_per_axis!r}")
        if not 1 <= self.bits_per_axis <= MAX_BITS_PER_AXIS:
            raise RangeError(
                f"bits_per_axis must be in [1, {MAX_BITS_PER_AXIS}], got {self.bits_per_axis}"
            )

    @property
    def side(self):
        return 1 << self.bits_per_axis

    @classmethod
    def covering(cls, size):
        """Smallest order whose side is at least ``size``."""
        if size < 1:
            raise RangeError(f"size must be positive, got {size}")
        return cls(max(1, int(size - 1).bit_length()))


def _order(order):
    return order if isinstance(order, CurveOrder) else CurveOrder(int(order))


def _is_scalar(*values):
    return all(np.ndim(v) == 0 for v in values)


def _coords(values, limit, what):
    """Validate coordinates against ``[0, limit)`` and return them as uint64 arrays."""
    arrays = [np.asarray(v) for v in values]
    for a in arrays:
        if a.dtype.kind not in 'iu':
            raise RangeError(f"{what} must be integers, got dtype {a.dtype}")
        if a.size and (np.any(a < 0) or np.any(a >= limit)):
            raise RangeError(f"{what} out of range [0, {limit})")
    arrays = np.broadcast_arrays(*arrays)
    return [a.astype(np.uint64) for a in arrays]


def _index(value, bits):
    """Validate curve indices against a budget of ``bits`` bits."""
    a = np.asarray(value)
    if a.dtype.kind not in 'iu':
        raise RangeError(f"curve index must be an integer, got dtype {a.dtype}")
    if a.dtype.kind == 'i' and a.size and np.any(a < 0):
        raise RangeError("curve index must be non-negative")
    u = a.astype(np.uint64)
    if bits < 64 and u.size and np.any(u >> np.uint64(bits)):
        raise RangeError(f"curve index out of range [0, 2**{bits})")
    return u


def _scalarize(scalar, *arrays):
    if not scalar:
        return arrays[0] if len(arrays) == 1 else tuple(arrays)
    values = tuple(int(a) for a in arrays)
    return values[0] if len(values) == 1 else values


# --- Hilbert ------------------------------------------------------------------

def _axes_to_transpose(axes, bits):
    x = [a.copy() for a in axes]
    n = len(x)
    q = 1 << (bits - 1)
    # Inverse undo excess work
    while q > 1:
        p = np.uint64(q - 1)
        qq = np.uint64(q)
        for i in range(n):
            hit = (x[i] & qq) != 0
            if i == 0:
                x[0] = np.where(hit, x[0] ^ p, x[0])
                continue
            t = (x[0] ^ x[i]) & p
            x[0], x[i] = np.where(hit, x[0] ^ p, x[0] ^ t), np.where(hit, x[i], x[i] ^ t)
        q >>= 1
    # Gray encode
    for i in range(1, n):
        x[i] = x[i] ^ x[i - 1]
    t = np.zeros_like(x[0])
    q = 1 << (bits - 1)
    while q > 1:
        t = np.where((x[n - 1] & np.uint64(q)) != 0, t ^ np.uint64(q - 1), t)
        q >>= 1
    return [xi ^ t for xi in x]


def _transpose_to_axes(x, bits):
    x = [a.copy() for a in x]
    n = len(x)
    # Gray decode by H ^ (H/2)
    t = x[n - 1] >> _U1
    for i in range(n - 1, 0, -1):
        x[i] = x[i] ^ x[i - 1]
    x[0] = x[0] ^ t
    # Undo excess work
    q = 2
    while q != (2 << (bits - 1)):
        p = np.uint64(q - 1)
        qq = np.uint64(q)
        for i in range(n - 1, -1, -1):
            hit = (x[i] & qq) != 0
            if i == 0:
                x[0] = np.where(hit, x[0] ^ p, x[0])
                continue
            t = (x[0] ^ x[i]) & p
            x[0], x[i] = np.where(hit, x[0] ^ p, x[0] ^ t), np.where(hit, x[i], x[i] ^ t)
        q <<= 1
    return x


def _interleave_transpose(x, bits):
    n = len(x)
    h = np.zeros_like(x[0])
    for b in range(bits - 1, -1, -1):
        for i in range(n):
            h = (h << _U1) | ((x[i] >> np.uint64(b)) & _U1)
    return h


def _deinterleave_transpose(h, bits, n):
    x = [np.zeros_like(h) for _ in range(n)]
    for b in range(bits):
        for i in range(n):
            bit = (h >> np.uint64(b * n + n - 1 - i)) & _U1
            x[i] = x[i] | (bit << np.uint64(b))
    return x


def hilbert2d_index(x, y, order):
    """Curve index of cell ``(x, y)`` on the 2D Hilbert curve of the given order."""
    order = _order(order)
    axes = _coords((x, y), order.side, 'coordinates')
    h = _interleave_transpose(_axes_to_transpose(axes, order.bits_per_axis), order.bits_per_axis)
    return _scalarize(_is_scalar(x, y), h)


def hilbert2d_coord(index, order):
    """Inverse of :func:`hilbert2d_index`: returns ``(x, y)``."""
    order = _order(order)
    h = _index(index, 2 * order.bits_per_axis)
    axes = _transpose_to_axes(_deinterleave_transpose(h, order.bits_per_axis, 2), order.bits_per_axis)
    return _scalarize(_is_scalar(index), *axes)


def hilbert3d_index(x, y, z, order):
    """Curve index of cell ``(x, y, z)`` on the 3D Hilbert curve of the given order."""
    order = _order(order)
    axes = _coords((x, y, z), order.side, 'coordinates')
    h = _interleave_transpose(_axes_to_transpose(axes, order.bits_per_axis), order.bits_per_axis)
    return _scalarize(_is_scalar(x, y, z), h)


def hilbert3d_coord(index, order):
    """Inverse of :func:`hilbert3d_index`: returns ``(x, y, z)``."""
    order = _order(order)
    h = _index(index, 3 * order.bits_per_axis)
    axes = _transpose_to_axes(_deinterleave_transpose(h, order.bits_per_axis, 3), order.bits_per_axis)
    return _scalarize(_is_scalar(index), *axes)


# --- Morton -------------------------------------------------------------------

_MASK_32 = np.uint64(0xFFFFFFFF)
_SPREAD2 = [
    (16, np.uint64(0x0000FFFF0000FFFF)),
    (8, np.uint64(0x00FF00FF00FF00FF)),
    (4, np.uint64(0x0F0F0F0F0F0F0F0F)),
    (2, np.uint64(0x3333333333333333)),
    (1, np.uint64(0x5555555555555555)),
]

_MASK_21 = np.uint64(0x1FFFFF)
_SPREAD3 = [
    (32, np.uint64(0x1F00000000FFFF)),
    (16, np.uint64(0x1F0000FF0000FF)),
    (8, np.uint64(0x100F00F00F00F00F)),
    (4, np.uint64(0x10C30C30C30C30C3)),
    (2, np.uint64(0x1249249249249249)),
]


def _spread(v, mask, steps):
    v = v & mask
    for shift, m in steps:
        v = (v | (v << np.uint64(shift))) & m
    return v


def _compact(v, mask, steps):
    shifts = [shift for shift, _ in reversed(steps)]
    masks = [m for _, m in reversed(steps)][1:] + [mask]
    v = v & steps[-1][1]
    for shift, m in zip(shifts, masks):
        v = (v | (v >> np.uint64(shift))) & m
    return v


def morton2d_index(x, y):
    """Interleave ``x`` into even bits and ``y`` into odd bits."""
    xs, ys = _coords((x, y), 1 << 32, 'coordinates')
    code = _spread(xs, _MASK_32, _SPREAD2) | (_spread(ys, _MASK_32, _SPREAD2) << _U1)
    return _scalarize(_is_scalar(x, y), code)


def morton2d_coord(index):
    h = _index(index, 64)
    x = _compact(h, _MASK_32, _SPREAD2)
    y = _compact(h >> _U1, _MASK_32, _SPREAD2)
    return _scalarize(_is_scalar(index), x, y)


def morton3d_index(x, y, z):
    """Interleave ``x``, ``y``, ``z`` into bits ``3i``, ``3i+1``, ``3i+2``."""
    xs, ys, zs = _coords((x, y, z), 1 << MAX_BITS_PER_AXIS, 'coordinates')
    code = (_spread(xs, _MASK_21, _SPREAD3)
            | (_spread(ys, _MASK_21, _SPREAD3) << _U1)
            | (_spread(zs, _MASK_21, _SPREAD3) << np.uint64(2)))
    return _scalarize(_is_scalar(x, y, z), code)


def morton3d_coord(index):
    h = _index(index, 3 * MAX_BITS_PER_AXIS)
    x = _compact(h, _MASK_21, _SPREAD3)
    y = _compact(h >> _U1, _MASK_21, _SPREAD3)
    z = _compact(h >> np.uint64(2), _MASK_21, _SPREAD3)
    return _scalarize(_is_scalar(index), x, y, z)
