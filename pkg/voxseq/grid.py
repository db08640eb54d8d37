"""Dense voxel grid containers shared by the ordering, hierarchy and head modules."""
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, RangeError

MAX_VOXELS = 1 << 40


@dataclass(frozen=True)
class GridDims:
    """Voxel counts per axis plus a channel count.

    The linear index of voxel ``(x, y, z)`` is ``x + w * (y + h * z)``.
    """
    w: int
    h: int
    d: int
    c: int = 0

    def __post_init__(self):
        for name in ('w', 'h', 'd', 'c'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ContractError(f"{name} must be an integer, got {value!r}")
        if min(self.w, self.h, self.d) < 1:
            raise ContractError(f"grid sizes must be positive, got {self.w}x{self.h}x{self.d}")
        if self.c < 0:
            raise ContractError(f"channel count must be >= 0, got {self.c}")
        if self.w * self.h * self.d > MAX_VOXELS:
            raise RangeError(f"grid {self.w}x{self.h}x{self.d} exceeds 2**40 voxels")

    @property
    def voxels(self):
        return self.w * self.h * self.d

    @property
    def shape(self):
        """Spatial shape in array order ``(d, h, w)``."""
        return (self.d, self.h, self.w)

    def spatial(self):
        """The same dims with the channel count dropped."""
        return GridDims(self.w, self.h, self.d)

    @classmethod
    def parse(cls, text):
        """Parse ``WxHxD`` (as used on the command line)."""
        parts = str(text).lower().split('x')
        if len(parts) != 3:
            raise ContractError(f"dims must look like WxHxD, got {text!r}")
        try:
            w, h, d = (int(p) for p in parts)
        except ValueError:
            raise ContractError(f"dims must be integers, got {text!r}") from None
        return cls(w, h, d)

    def __str__(self):
        return f"{self.w}x{self.h}x{self.d}"


@dataclass(eq=False)
class FeatureGrid:
    """A ``W x H x D x C`` feature volume stored as a ``(d, h, w, c)`` array.

    The C-order layout makes voxel ``L = x + w * (y + h * z)`` occupy row ``L``
    of :meth:`voxels`, with its channels contiguous.
    """
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 4:
            raise ContractError(f"feature grid must be 4D (d, h, w, c), got shape {self.values.shape}")
        d, h, w, _ = self.values.shape
        if min(w, h, d) < 1:
            raise ContractError(f"feature grid must be non-empty, got shape {self.values.shape}")

    @property
    def dims(self):
        d, h, w, c = self.values.shape
        return GridDims(w, h, d, c)

    @property
    def dtype(self):
        return self.values.dtype

    def voxels(self):
        """``(N, C)`` view with one row per voxel in linear-index order."""
        d, h, w, c = self.values.shape
        return self.values.reshape(d * h * w, c)

    @classmethod
    def from_voxels(cls, dims, rows):
        """Build a grid from ``(N, C)`` rows in linear-index order."""
        rows = np.asarray(rows)
        if rows.ndim != 2 or rows.shape[0] != dims.voxels:
            raise ContractError(f"expected ({dims.voxels}, C) rows for {dims}, got {rows.shape}")
        return cls(rows.reshape(dims.shape + (rows.shape[1],)))
