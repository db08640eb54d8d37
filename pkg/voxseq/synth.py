"""
Procedural occupancy scenes standing in for backbone outputs.

A scene has a ground slab (class 1) at ``z = 0``, one to four axis-aligned boxes
(class 2) standing on it and one to three vertical columns (class 3) placed
away from the boxes; everything else is free space (class 0). Features are a
fixed random linear embedding of the one-hot labels plus Gaussian noise.

All draws come from a Philox generator keyed by the scene seed, so a seed
always regenerates the same scene and no global random state is touched.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError
from .grid import FeatureGrid, GridDims

EMPTY, GROUND, BOX, COLUMN = 0, 1, 2, 3
MIN_CLASSES = 4
DEFAULT_CHANNELS = 8
DEFAULT_NOISE = 0.5
EMBEDDING_SEED = 0x5CE9E


def scene_rng(seed):
    """Counter-based generator for ``seed`` (any integer in ``[0, 2**64)``)."""
    if not 0 <= int(seed) < 1 << 64:
        raise ContractError(f"seed must fit in 64 bits, got {seed}")
    return np.random.Generator(np.random.Philox(key=int(seed)))


def class_embedding(classes, channels, seed=EMBEDDING_SEED, dtype=np.float64):
    """The ``(K, C)`` matrix mapping one-hot labels to features."""
    return scene_rng(seed).standard_normal((classes, channels)).astype(dtype)


@dataclass(eq=False)
class SceneSample:
    features: FeatureGrid
    labels: np.ndarray
    seed: int

    @property
    def dims(self):
        return self.features.dims


def _check_dims(dims, classes):
    if classes < MIN_CLASSES:
        raise ContractError(f"scenes need at least {MIN_CLASSES} classes, got {classes}")
    if dims.w < 4 or dims.h < 4 or dims.d < 2:
        raise ContractError(f"scenes need at least 4x4x2 voxels, got {dims.spatial()}")


def scene_labels(rng, dims):
    """Draw the ``(d, h, w)`` label volume of one scene."""
    w, h, d = dims.w, dims.h, dims.d
    labels = np.full(dims.shape, EMPTY, dtype=np.uint16)
    labels[0] = GROUND
    footprint = np.zeros((h, w), dtype=bool)

    for _ in range(int(rng.integers(1, 5))):
        sx = int(rng.integers(1, max(1, w // 4) + 1))
        sy = int(rng.integers(1, max(1, h // 4) + 1))
        sz = int(rng.integers(1, max(1, (d - 1) // 2) + 1))
        x0 = int(rng.integers(0, w - sx + 1))
        y0 = int(rng.integers(0, h - sy + 1))
        labels[1:1 + sz, y0:y0 + sy, x0:x0 + sx] = BOX
        footprint[y0:y0 + sy, x0:x0 + sx] = True

    free = np.flatnonzero(~footprint.ravel())
    count = min(int(rng.integers(1, 4)), free.size)
    for cell in rng.choice(free, size=count, replace=False):
        y, x = divmod(int(cell), w)
        top = int(rng.integers(1, d)) if d > 2 else 1
        labels[1:top + 1, y, x] = COLUMN
    return labels


def scene_features(rng, labels, embedding, noise=DEFAULT_NOISE):
    onehot = np.eye(embedding.shape[0], dtype=embedding.dtype)[labels]
    features = onehot @ embedding
    if noise:
        features = features + noise * rng.standard_normal(features.shape).astype(embedding.dtype)
    return FeatureGrid(features)


def generate_scene(seed, dims, classes, channels=DEFAULT_CHANNELS, noise=DEFAULT_NOISE,
                   embedding=None, dtype=np.float64):
    """Generate the scene for ``seed``; the same arguments always give the same sample."""
    dims = dims if isinstance(dims, GridDims) else GridDims(*dims)
    _check_dims(dims, classes)
    if embedding is None:
        embedding = class_embedding(classes, channels, dtype=dtype)
    embedding = np.asarray(embedding, dtype=dtype)
    if embedding.ndim != 2 or embedding.shape[0] != classes:
        raise ContractError(f"embedding must be ({classes}, C), got {embedding.shape}")
    if noise < 0:
        raise ContractError(f"noise must be >= 0, got {noise}")
    rng = scene_rng(seed)
    labels = scene_labels(rng, dims)
    return SceneSample(scene_features(rng, labels, embedding, noise), labels, int(seed))
