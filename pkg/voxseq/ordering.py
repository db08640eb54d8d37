"""
3D-to-1D reordering schemes for voxel grids.

An :class:`Ordering` maps sequence positions to grid linear indices. The
height-prioritized schemes emit every vertical ``z`` column contiguously and
visit the columns along a 2D curve on the XY plane; the 3D curve schemes
traverse the padded power-of-two bounding cube and drop cells outside the
grid, which keeps the relative curve order and compacts positions.
"""
import enum
import functools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import sfc
from .exceptions import ContractError
from .grid import FeatureGrid, GridDims

logger = logging.getLogger(__name__)


class Scheme(str, enum.Enum):
    RASTER_XYZ = 'raster-xyz'
    RASTER_ZXY = 'raster-zxy'
    MORTON3D = 'morton3d'
    HILBERT3D = 'hilbert3d'
    HP_HILBERT2D = 'hp-hilbert2d'
    HP_MORTON2D = 'hp-morton2d'
    HP_RASTER2D = 'hp-raster2d'

    @property
    def code(self):
        return SCHEME_CODES[self]

    @property
    def height_prioritized(self):
        return self in (Scheme.HP_HILBERT2D, Scheme.HP_MORTON2D, Scheme.HP_RASTER2D)

    @classmethod
    def from_code(cls, code):
        for scheme, value in SCHEME_CODES.items():
            if value == code:
                return scheme
        raise ContractError(f"unknown scheme code {code}")


# Codes stored in VORD files.
SCHEME_CODES = {
    Scheme.RASTER_XYZ: 1,
    Scheme.RASTER_ZXY: 2,
    Scheme.MORTON3D: 3,
    Scheme.HILBERT3D: 4,
    Scheme.HP_HILBERT2D: 5,
    Scheme.HP_MORTON2D: 6,
    Scheme.HP_RASTER2D: 7,
}


@dataclass(frozen=True)
class OrderingScheme:
    kind: Scheme
    z_snake: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'kind', Scheme(self.kind))
        if self.z_snake and not self.kind.height_prioritized:
            raise ContractError(f"z_snake only applies to height-prioritized schemes, not {self.kind.value}")

    @classmethod
    def parse(cls, text, z_snake=False):
        try:
            return cls(Scheme(text), z_snake)
        except ValueError:
            choices = ', '.join(s.value for s in Scheme)
            raise ContractError(f"unknown scheme {text!r} (choose from {choices})") from None

    def __str__(self):
        return f"{self.kind.value}+snake" if self.z_snake else self.kind.value


@dataclass(frozen=True, eq=False)
class Ordering:
    """A bijection between sequence positions and grid linear indices."""
    scheme: OrderingScheme
    dims: GridDims
    seq_to_linear: np.ndarray
    linear_to_seq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        seq = np.ascontiguousarray(self.seq_to_linear, dtype=np.int64)
        n = self.dims.voxels
        if seq.shape != (n,):
            raise ContractError(f"ordering for {self.dims} needs {n} entries, got {seq.shape}")
        if n and (seq.min() < 0 or seq.max() >= n or np.bincount(seq, minlength=n).max() != 1):
            raise ContractError("seq_to_linear is not a permutation")
        inverse = np.empty(n, dtype=np.int64)
        inverse[seq] = np.arange(n, dtype=np.int64)
        seq.setflags(write=False)
        inverse.setflags(write=False)
        object.__setattr__(self, 'seq_to_linear', seq)
        object.__setattr__(self, 'linear_to_seq', inverse)
        object.__setattr__(self, 'dims', self.dims.spatial())

    def __len__(self):
        return self.dims.voxels


def _coordinates(dims):
    z, y, x = np.unravel_index(np.arange(dims.voxels, dtype=np.int64), dims.shape)
    return x, y, z


def _column_order(kind, w, h):
    """XY-plane linear indices ``x + w * y`` in the order columns are visited."""
    cells = np.arange(w * h, dtype=np.int64)
    if kind is Scheme.HP_RASTER2D:
        return cells
    ys, xs = np.divmod(cells, w)
    if kind is Scheme.HP_HILBERT2D:
        keys = sfc.hilbert2d_index(xs, ys, sfc.CurveOrder.covering(max(w, h)))
    else:
        keys = sfc.morton2d_index(xs, ys)
    return cells[np.argsort(keys, kind='stable')]


def _curve3d_order(kind, dims):
    x, y, z = _coordinates(dims)
    if kind is Scheme.HILBERT3D:
        keys = sfc.hilbert3d_index(x, y, z, sfc.CurveOrder.covering(max(dims.w, dims.h, dims.d)))
    else:
        keys = sfc.morton3d_index(x, y, z)
    return np.argsort(keys, kind='stable')


def build_ordering(scheme, dims):
    """Build the full-grid ordering of ``scheme`` over ``dims``."""
    if not isinstance(scheme, OrderingScheme):
        scheme = OrderingScheme(scheme)
    dims = dims.spatial()
    w, h, d = dims.w, dims.h, dims.d
    kind = scheme.kind

    if kind is Scheme.RASTER_XYZ:
        seq = np.arange(dims.voxels, dtype=np.int64)
    elif kind is Scheme.RASTER_ZXY:
        # z fastest, then x, then y
        seq = np.arange(dims.voxels, dtype=np.int64).reshape(d, h, w).transpose(1, 2, 0).ravel()
    elif kind.height_prioritized:
        columns = _column_order(kind, w, h)
        seq = columns[:, None] + (w * h) * np.arange(d, dtype=np.int64)[None, :]
        if scheme.z_snake:
            seq[1::2] = seq[1::2, ::-1]
        seq = seq.ravel()
    else:
        seq = _curve3d_order(kind, dims)

    logger.debug("built %s ordering over %s", scheme, dims)
    return Ordering(scheme, dims, seq)


@functools.lru_cache(maxsize=64)
def cached_ordering(scheme, dims):
    """Memoized :func:`build_ordering`; orderings are immutable and shareable."""
    return build_ordering(scheme, dims.spatial())


def _check_dims(dims, ordering):
    if dims.spatial() != ordering.dims:
        raise ContractError(f"grid dims {dims} do not match ordering dims {ordering.dims}")


def apply_ordering(grid, ordering):
    """Serialize ``grid`` into a ``(1, N, C)`` sequence following ``ordering``."""
    _check_dims(grid.dims, ordering)
    return grid.voxels()[ordering.seq_to_linear][None]


def invert_ordering(seq, ordering):
    """Scatter a ``(1, N, C)`` (or ``(N, C)``) sequence back onto the grid."""
    seq = np.asarray(seq)
    if seq.ndim == 3:
        if seq.shape[0] != 1:
            raise ContractError(f"expected a single sequence, got batch of {seq.shape[0]}")
        seq = seq[0]
    if seq.ndim != 2 or seq.shape[0] != len(ordering):
        raise ContractError(f"sequence of shape {seq.shape} does not fit an ordering of length {len(ordering)}")
    return FeatureGrid.from_voxels(ordering.dims, seq[ordering.linear_to_seq])
