"""
Channel fusion of LiDAR and camera voxel features, and the occupancy head
``O = MLP(coarse_to_fine(V'))``.
"""
from dataclasses import dataclass

import numpy as np

from . import layers
from .exceptions import ContractError, NumericError
from .grid import FeatureGrid, GridDims


@dataclass(eq=False)
class HeadParams:
    """Two-layer perceptron ``linear -> SiLU -> linear`` applied per voxel."""
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def in_width(self):
        return self.w1.shape[0]

    @property
    def classes(self):
        return self.w2.shape[1]


def init_head(rng, in_width, classes, dtype=np.float64):
    if classes < 2:
        raise ContractError(f"need at least 2 classes, got {classes}")
    bound = 1.0 / np.sqrt(in_width)
    return HeadParams(
        w1=rng.uniform(-bound, bound, size=(in_width, in_width)).astype(dtype),
        b1=np.zeros(in_width, dtype=dtype),
        w2=rng.uniform(-bound, bound, size=(in_width, classes)).astype(dtype),
        b2=np.zeros(classes, dtype=dtype),
    )


@dataclass(eq=False)
class OccupancyPrediction:
    """Per-voxel class logits, shape ``(d, h, w, K)``; class 0 is free space."""
    logits: np.ndarray

    def __post_init__(self):
        if self.logits.ndim != 4 or self.logits.shape[-1] < 2:
            raise ContractError(f"logits must be (d, h, w, K>=2), got {self.logits.shape}")
        if not np.all(np.isfinite(self.logits)):
            raise NumericError("occupancy logits contain NaN or Inf")

    @property
    def dims(self):
        d, h, w, _ = self.logits.shape
        return GridDims(w, h, d)

    @property
    def classes(self):
        return self.logits.shape[-1]

    def labels(self):
        return self.logits.argmax(axis=-1)


def fuse_concat(v_lidar, v_camera):
    """Concatenate along channels, LiDAR channels first."""
    if v_lidar.dims.spatial() != v_camera.dims.spatial():
        raise ContractError(f"cannot fuse {v_lidar.dims} with {v_camera.dims}: spatial dims differ")
    return FeatureGrid(np.concatenate([v_lidar.values, v_camera.values], axis=-1))


# --- Coarse to fine -----------------------------------------------------------

def interpolation_matrix(source, target, dtype=np.float64):
    """``(target, source)`` weights of 1D linear interpolation, align-corners false.

    Output cell ``i`` samples source position ``(i + 0.5) * source / target - 0.5``,
    clamped to the valid range.
    """
    pos = (np.arange(target, dtype=np.float64) + 0.5) * (source / target) - 0.5
    pos = np.clip(pos, 0.0, source - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, source - 1)
    frac = pos - lo
    matrix = np.zeros((target, source), dtype=np.float64)
    rows = np.arange(target)
    np.add.at(matrix, (rows, lo), 1.0 - frac)
    np.add.at(matrix, (rows, hi), frac)
    return matrix.astype(dtype)


def _axis_matrices(dims, target, dtype):
    return (
        interpolation_matrix(dims.d, target.d, dtype),
        interpolation_matrix(dims.h, target.h, dtype),
        interpolation_matrix(dims.w, target.w, dtype),
    )


def _apply_separable(values, matrices):
    mz, my, mx = matrices
    out = np.einsum('zd,dhwc->zhwc', mz, values, optimize=True)
    out = np.einsum('yh,zhwc->zywc', my, out, optimize=True)
    return np.einsum('xw,zywc->zyxc', mx, out, optimize=True)


def coarse_to_fine(grid, target, return_tape=False):
    """Trilinearly resample ``grid`` to the spatial size of ``target``."""
    dims = grid.dims
    if target.w < dims.w or target.h < dims.h or target.d < dims.d:
        raise ContractError(f"target {target} is smaller than source {dims.spatial()}")
    matrices = _axis_matrices(dims, target, grid.dtype)
    out = FeatureGrid(_apply_separable(grid.values, matrices))
    return (out, matrices) if return_tape else out


def coarse_to_fine_backward(matrices, dout):
    return _apply_separable(dout, tuple(m.T for m in matrices))


# --- Classifier ---------------------------------------------------------------

def classify(grid, head, return_tape=False):
    """Per-voxel logits ``w2^T silu(w1^T v + b1) + b2``."""
    if grid.dims.c != head.in_width:
        raise ContractError(f"grid has {grid.dims.c} channels, head expects {head.in_width}")
    hidden, cache1 = layers.linear_forward(grid.values, head.w1, head.b1)
    act, act_cache = layers.silu_forward(hidden)
    logits, cache2 = layers.linear_forward(act, head.w2, head.b2)
    prediction = OccupancyPrediction(logits)
    return (prediction, (cache1, act_cache, cache2)) if return_tape else prediction


def classify_backward(tape, dlogits):
    """Return ``(dgrid, grads)`` with ``grads`` a :class:`HeadParams`."""
    cache1, act_cache, cache2 = tape
    dact, dw2, db2 = layers.linear_backward(cache2, dlogits)
    dhidden = layers.silu_backward(act_cache, dact)
    dgrid, dw1, db1 = layers.linear_backward(cache1, dhidden)
    return dgrid, HeadParams(w1=dw1, b1=db1, w2=dw2, b2=db2)


def predict(grid, head, target=None, return_tape=False):
    """``classify(coarse_to_fine(grid, target))``; ``target`` defaults to the grid's own dims."""
    target = target or grid.dims.spatial()
    if not return_tape:
        return classify(coarse_to_fine(grid, target), head)
    fine, matrices = coarse_to_fine(grid, target, return_tape=True)
    prediction, head_tape = classify(fine, head, return_tape=True)
    return prediction, (matrices, head_tape)


def predict_backward(tape, dlogits):
    matrices, head_tape = tape
    dfine, grads = classify_backward(head_tape, dlogits)
    return coarse_to_fine_backward(matrices, dfine), grads
