"""
Toy end-to-end training on synthetic scenes.

The model fuses the LiDAR and camera parts of a scene's features, maps them to
the hierarchy base width with a linear stem, runs the Mamba encoder / decoder
and classifies every voxel. Parameters are updated by plain gradient descent
on ``L_CE + l1 * L_iou`` (the other loss slots are zero here). Every step is
a full-batch step over the ``batch_size`` training scenes with seeds ``seed``,
``seed + 1`` and so on, all below ``eval_seed_base``; held-out scenes start at it.
"""
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from . import layers
from .exceptions import ContractError, DivergenceError, FormatError, NumericError
from .grid import FeatureGrid, GridDims
from .hierarchy import HierarchyConfig, HierarchyParams, hierarchy_backward, hierarchy_forward, init_hierarchy
from .losses import (
    IGNORE_LABEL, ConfusionMatrix, IouReport, LossWeights, cross_entropy, iou_from_confusion, lovasz_softmax_logits,
    merge_all, total_loss,
)
from .occ_head import HeadParams, fuse_concat, init_head, predict, predict_backward
from .ordering import OrderingScheme, Scheme
from .params import accumulate, descend, iter_arrays, load_arrays, zeros_like
from .synth import MIN_CLASSES, generate_scene

logger = logging.getLogger(__name__)

EVAL_SEED_BASE = 1_000_000
PRECISIONS = ('float64', 'float32')


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    lr: float = 0.1
    seed: int = 0
    dims: GridDims = GridDims(16, 16, 8)
    classes: int = 4
    batch_size: int = 1
    scheme: Scheme = Scheme.HP_HILBERT2D
    z_snake: bool = False
    groups: int = 4
    blocks_per_group: int = 2
    base_width: int = 8
    state_dim: int = 8
    channels: int = 8
    lidar_channels: int = 4
    noise: float = 0.5
    lambda_iou: float = 1.0
    lambda_geo: float = 1.0
    lambda_sem: float = 1.0
    lambda_depth: float = 1.0
    eval_every: int = 50
    eval_scenes: int = 8
    eval_seed_base: int = EVAL_SEED_BASE
    ignore_label: int = IGNORE_LABEL
    precision: str = 'float64'

    def __post_init__(self):
        if isinstance(self.dims, str):
            object.__setattr__(self, 'dims', GridDims.parse(self.dims))
        elif not isinstance(self.dims, GridDims):
            object.__setattr__(self, 'dims', GridDims(*self.dims))
        try:
            object.__setattr__(self, 'scheme', Scheme(self.scheme))
        except ValueError:
            raise ContractError(f"unknown scheme {self.scheme!r}") from None
        if self.steps < 1:
            raise ContractError(f"steps must be >= 1, got {self.steps}")
        if not math.isfinite(self.lr) or self.lr < 0:
            raise ContractError(f"learning rate must be finite and >= 0, got {self.lr}")
        if self.batch_size < 1 or self.eval_every < 1 or self.eval_scenes < 0:
            raise ContractError("batch_size and eval_every must be >= 1, eval_scenes >= 0")
        if not 0 <= self.lidar_channels <= self.channels or self.channels < 1:
            raise ContractError(f"lidar_channels must lie in [0, {self.channels}], got {self.lidar_channels}")
        if self.classes < MIN_CLASSES:
            raise ContractError(f"synthetic scenes need at least {MIN_CLASSES} classes, got {self.classes}")
        if self.precision not in PRECISIONS:
            raise ContractError(f"precision must be one of {PRECISIONS}, got {self.precision!r}")
        if self.seed < 0 or self.seed + self.batch_size > self.eval_seed_base:
            raise ContractError(f"training seeds must stay below the held-out range starting at {self.eval_seed_base}")
        # raises on invalid nested settings
        self.hierarchy
        self.weights

    @property
    def ordering(self):
        return OrderingScheme(self.scheme, self.z_snake)

    @property
    def hierarchy(self):
        return HierarchyConfig(groups=self.groups, blocks_per_group=self.blocks_per_group, scheme=self.ordering,
                               base_width=self.base_width, state_dim=self.state_dim)

    @property
    def weights(self):
        return LossWeights(self.lambda_iou, self.lambda_geo, self.lambda_sem, self.lambda_depth)

    @property
    def dtype(self):
        return np.dtype(self.precision)

    def train_seeds(self):
        """The fixed training set: one scene per batch slot."""
        return range(self.seed, self.seed + self.batch_size)

    def eval_seeds(self):
        return range(self.eval_seed_base, self.eval_seed_base + self.eval_scenes)

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['dims'] = str(self.dims)
        data['scheme'] = self.scheme.value
        return data

    @classmethod
    def from_dict(cls, data):
        """Build from a mapping of field names; unknown keys are rejected."""
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ContractError(f"unknown training options: {', '.join(sorted(unknown))}")
        return cls(**data)


@dataclass(eq=False)
class ModelParams:
    stem: np.ndarray
    stem_bias: np.ndarray
    hierarchy: HierarchyParams
    head: HeadParams


@dataclass(eq=False)
class TrainResult:
    config: TrainConfig
    params: ModelParams
    log: List[Dict[str, Any]] = field(default_factory=list)
    report: Optional[IouReport] = None

    @property
    def initial_loss(self):
        return self.log[0]['loss']

    @property
    def final_loss(self):
        return self.log[-1]['loss']

    @property
    def final_miou(self):
        return self.log[-1].get('miou')


def init_model(config):
    rng = np.random.default_rng([config.seed, 1])
    dtype = config.dtype
    bound = 1.0 / np.sqrt(config.channels)
    return ModelParams(
        stem=rng.uniform(-bound, bound, size=(config.channels, config.base_width)).astype(dtype),
        stem_bias=np.zeros(config.base_width, dtype=dtype),
        hierarchy=init_hierarchy(rng, config.hierarchy, dtype=dtype),
        head=init_head(rng, config.base_width, config.classes, dtype=dtype),
    )


def split_modalities(features, lidar_channels):
    """``(V_L, V_C)``: the first ``lidar_channels`` channels and the rest."""
    values = features.values
    return FeatureGrid(values[..., :lidar_channels]), FeatureGrid(values[..., lidar_channels:])


def model_forward(config, params, features, return_tape=False):
    """Logits for one scene's features."""
    if features.dims.c != config.channels:
        raise ContractError(f"scene has {features.dims.c} channels, model expects {config.channels}")
    fused = fuse_concat(*split_modalities(features, config.lidar_channels))
    stem, stem_cache = layers.linear_forward(fused.values, params.stem, params.stem_bias)
    if not return_tape:
        decoded = hierarchy_forward(config.hierarchy, params.hierarchy, FeatureGrid(stem))
        return predict(decoded, params.head)
    decoded, hierarchy_tape = hierarchy_forward(config.hierarchy, params.hierarchy, FeatureGrid(stem),
                                                return_tape=True)
    prediction, head_tape = predict(decoded, params.head, return_tape=True)
    return prediction, (stem_cache, hierarchy_tape, head_tape)


def model_backward(tape, dlogits):
    stem_cache, hierarchy_tape, head_tape = tape
    ddecoded, head_grads = predict_backward(head_tape, dlogits)
    dstem, hierarchy_grads = hierarchy_backward(hierarchy_tape, ddecoded)
    _, dw, db = layers.linear_backward(stem_cache, dstem)
    return ModelParams(stem=dw, stem_bias=db, hierarchy=hierarchy_grads, head=head_grads)


def scene_for(config, seed):
    return generate_scene(seed, config.dims, config.classes, channels=config.channels, noise=config.noise,
                          dtype=config.dtype)


def loss_and_grads(config, params, scene):
    """Return ``(parts, grads)`` for one scene; ``parts`` has ``loss``, ``ce`` and ``lovasz``."""
    prediction, tape = model_forward(config, params, scene.features, return_tape=True)
    ce, dce = cross_entropy(prediction.logits, scene.labels, config.ignore_label)
    lovasz, dlovasz = lovasz_softmax_logits(prediction.logits, scene.labels, config.ignore_label)
    loss = total_loss({'ce': ce, 'iou': lovasz}, config.weights)
    dlogits = dce + config.weights.lambda_iou * dlovasz
    return {'loss': loss, 'ce': ce, 'lovasz': lovasz}, model_backward(tape, dlogits)


def _confusion(config, params, seed):
    scene = scene_for(config, seed)
    prediction = model_forward(config, params, scene.features)
    return ConfusionMatrix(config.classes, config.ignore_label).accumulate(prediction.labels(), scene.labels)


def evaluate(config, params, seeds=None, workers=1):
    """Confusion over the held-out scenes, reduced to an :class:`~voxseq.losses.IouReport`.

    Scenes are evaluated on up to ``workers`` threads (0 means one per CPU);
    the matrices are merged in seed order.
    """
    seeds = list(config.eval_seeds() if seeds is None else seeds)
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            matrices = list(pool.map(lambda seed: _confusion(config, params, seed), seeds))
    else:
        matrices = [_confusion(config, params, seed) for seed in seeds]
    return iou_from_confusion(merge_all(matrices, config.classes, config.ignore_label))


def _report_miou(report):
    return None if math.isnan(report.miou) else report.miou


def train_toy(config, on_row=None, workers=1):
    """Train from scratch; ``on_row`` is called with every log row as it is produced."""
    params = init_model(config)
    result = TrainResult(config, params)
    scenes = [scene_for(config, seed) for seed in config.train_seeds()]
    for step in range(1, config.steps + 1):
        grads = zeros_like(params)
        parts = {'loss': 0.0, 'ce': 0.0, 'lovasz': 0.0}
        try:
            for scene in scenes:
                scene_parts, scene_grads = loss_and_grads(config, params, scene)
                accumulate(grads, scene_grads)
                for key in parts:
                    parts[key] += scene_parts[key] / config.batch_size
        except NumericError as exc:
            raise DivergenceError(step, float('nan')) from exc
        if not math.isfinite(parts['loss']):
            raise DivergenceError(step, parts['loss'])
        if config.batch_size > 1:
            for _, grad in iter_arrays(grads):
                grad /= config.batch_size
        descend(params, grads, config.lr)

        row = {'step': step, 'loss': parts['loss'], 'ce': parts['ce'], 'lovasz': parts['lovasz']}
        if step % config.eval_every == 0 or step == config.steps:
            report = evaluate(config, params, workers=workers)
            row['miou'] = _report_miou(report)
            result.report = report
            logger.info("step %d: loss %.4f, held-out mIoU %s", step, row['loss'], row['miou'])
        result.log.append(row)
        if on_row is not None:
            on_row(row)
    return result


# --- Parameter files ----------------------------------------------------------

def save_model(path, config, params):
    """Write ``params`` and the config that built them to an ``.npz`` archive."""
    arrays = {name: value for name, value in iter_arrays(params)}
    with open(path, 'wb') as fh:
        np.savez(fh, __config__=np.array(json.dumps(config.to_dict())), **arrays)


def load_model(path):
    """Return ``(config, params)`` from :func:`save_model` output."""
    try:
        archive = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise FormatError(f"{path} is not a parameter archive: {exc}", 0) from None
    with archive:
        if '__config__' not in archive.files:
            raise FormatError(f"{path} holds no training config", 0)
        config = TrainConfig.from_dict(json.loads(str(archive['__config__'])))
        params = init_model(config)
        try:
            load_arrays(params, {name: archive[name] for name in archive.files if name != '__config__'})
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: {exc}", 0) from None
    return config, params


def train_to_files(config, log_path, params_path, workers=1):
    """Run :func:`train_toy`, streaming the log to ``log_path`` and saving the final parameters.

    On divergence the rows written so far stay in the log and the error propagates.
    """
    with open(log_path, 'w') as fh:
        def write_row(row):
            fh.write(json.dumps(row) + '\n')
            fh.flush()

        result = train_toy(config, on_row=write_row, workers=workers)
    save_model(params_path, config, result.params)
    return result
