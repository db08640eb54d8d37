"""
Hierarchical Mamba encoder / decoder over voxel grids.

Each level serializes its grid with the configured ordering, runs a group of
Mamba blocks and scatters the result back. The encoder downsamples after every
group but the last; the decoder mirrors it, upsampling before each group and
adding the encoder feature of the same level. Orderings are fetched per level
dims from :func:`~voxseq.ordering.cached_ordering`.

Gradients flow as plain ``(d, h, w, c)`` arrays.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from . import layers
from .exceptions import ContractError
from .grid import FeatureGrid
from .mamba import (
    DEFAULT_CONV_WIDTH, DEFAULT_STATE_DIM, MambaBlockParams, init_mamba_block, mamba_block_backward,
    mamba_block_forward,
)
from .ordering import OrderingScheme, Scheme, apply_ordering, cached_ordering, invert_ordering

logger = logging.getLogger(__name__)

MAX_WIDTH_FACTOR = 4


@dataclass(frozen=True)
class HierarchyConfig:
    groups: int = 4
    blocks_per_group: int = 2
    scheme: OrderingScheme = OrderingScheme(Scheme.HP_HILBERT2D)
    base_width: int = 16
    widths: Tuple[int, ...] = ()
    state_dim: int = DEFAULT_STATE_DIM
    conv_width: int = DEFAULT_CONV_WIDTH
    expand: int = 2

    def __post_init__(self):
        if not isinstance(self.scheme, OrderingScheme):
            object.__setattr__(self, 'scheme', OrderingScheme(self.scheme))
        if self.groups < 1 or self.blocks_per_group < 1:
            raise ContractError(f"need groups >= 1 and blocks_per_group >= 1, got {self.groups}, "
                                f"{self.blocks_per_group}")
        if self.base_width < 1 or self.state_dim < 1 or self.conv_width < 1 or self.expand < 1:
            raise ContractError("widths, state dim, conv width and expansion must be positive")
        widths = tuple(int(w) for w in self.widths) or tuple(
            self.base_width * min(2 ** i, MAX_WIDTH_FACTOR) for i in range(self.groups)
        )
        if len(widths) != self.groups or min(widths) < 1 or widths[0] != self.base_width:
            raise ContractError(f"level widths {widths} must be {self.groups} positive values "
                                f"starting at the base width {self.base_width}")
        object.__setattr__(self, 'widths', widths)


@dataclass(eq=False)
class HierarchyParams:
    encoder: List[List[MambaBlockParams]]
    down: List[np.ndarray]
    up: List[np.ndarray]
    decoder: List[List[MambaBlockParams]]


@dataclass(eq=False)
class HierarchyState:
    """Encoder features kept for the decoder, finest level first."""
    skips: List[FeatureGrid] = field(default_factory=list)
    factors: List[Tuple[int, int, int]] = field(default_factory=list)


def init_hierarchy(rng, config, dtype=np.float64):
    widths = config.widths

    def group(width):
        return [
            init_mamba_block(rng, width, expand_dim=config.expand * width, state_dim=config.state_dim,
                             conv_width=config.conv_width, dtype=dtype)
            for _ in range(config.blocks_per_group)
        ]

    def channel_map(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)

    levels = range(config.groups - 1)
    return HierarchyParams(
        encoder=[group(w) for w in widths],
        down=[channel_map(widths[i], widths[i + 1]) for i in levels],
        up=[channel_map(widths[i + 1], widths[i]) for i in levels],
        decoder=[group(widths[i]) for i in levels],
    )


# --- Groups -------------------------------------------------------------------

def mamba_group(grid, blocks, ordering, return_tape=False):
    """Serialize ``grid`` along ``ordering``, apply ``blocks`` in turn, scatter back."""
    if grid.dims.spatial() != ordering.dims:
        raise ContractError(f"grid dims {grid.dims.spatial()} do not match ordering dims {ordering.dims}")
    for block in blocks:
        if block.model_dim != grid.dims.c:
            raise ContractError(f"grid has {grid.dims.c} channels, block expects {block.model_dim}")
    seq = apply_ordering(grid, ordering)
    tapes = []
    for block in blocks:
        if return_tape:
            seq, tape = mamba_block_forward(block, seq, return_tape=True)
            tapes.append(tape)
        else:
            seq = mamba_block_forward(block, seq)
    out = invert_ordering(seq, ordering)
    return (out, (ordering, tapes)) if return_tape else out


def mamba_group_backward(tape, dgrid):
    ordering, tapes = tape
    dseq = apply_ordering(FeatureGrid(dgrid), ordering)
    grads = []
    for block_tape in reversed(tapes):
        dseq, block_grads = mamba_block_backward(block_tape, dseq)
        grads.append(block_grads)
    grads.reverse()
    return invert_ordering(dseq, ordering).values, grads


# --- Resampling ---------------------------------------------------------------

def pool_factors(dims):
    """Per-axis ``(fx, fy, fz)``: 2 where the size is even and above 1, else 1."""
    return tuple(2 if size > 1 and size % 2 == 0 else 1 for size in (dims.w, dims.h, dims.d))


def _blocks_view(values, factors):
    fx, fy, fz = factors
    d, h, w, c = values.shape
    return values.reshape(d // fz, fz, h // fy, fy, w // fx, fx, c)


def average_pool(values, factors):
    return _blocks_view(values, factors).mean(axis=(1, 3, 5))


def average_pool_backward(dpooled, factors):
    fx, fy, fz = factors
    return nearest_unpool(dpooled, factors) / (fx * fy * fz)


def nearest_unpool(values, factors):
    fx, fy, fz = factors
    return values.repeat(fz, axis=0).repeat(fy, axis=1).repeat(fx, axis=2)


def nearest_unpool_backward(dvalues, factors):
    return _blocks_view(dvalues, factors).sum(axis=(1, 3, 5))


def _map_channels(values, channel_map):
    if channel_map is None:
        return values, None
    return layers.linear_forward(values, channel_map)


def downsample(grid, channel_map=None, factors=None, return_tape=False):
    """Average-pool by ``factors`` (default :func:`pool_factors`), then map channels.

    ``channel_map`` is a ``(c_in, c_out)`` matrix; ``None`` keeps the channels.
    """
    factors = factors or pool_factors(grid.dims)
    dims = grid.dims
    for size, f in zip((dims.w, dims.h, dims.d), factors):
        if size % f:
            raise ContractError(f"cannot pool {dims} by factors {factors}")
    pooled = average_pool(grid.values, factors)
    out, cache = _map_channels(pooled, channel_map)
    out = FeatureGrid(out)
    return (out, (factors, cache)) if return_tape else out


def downsample_backward(tape, dout):
    factors, cache = tape
    dpooled, dmap = dout, None
    if cache is not None:
        dpooled, dmap, _ = layers.linear_backward(cache, dout)
    return average_pool_backward(dpooled, factors), dmap


def upsample(grid, skip, factors, channel_map=None, return_tape=False):
    """Nearest-neighbor upsampling by ``factors``, channel map, then ``+ skip``."""
    unpooled = nearest_unpool(grid.values, factors)
    mapped, cache = _map_channels(unpooled, channel_map)
    if mapped.shape != skip.values.shape:
        raise ContractError(f"upsampled grid {FeatureGrid(mapped).dims} does not match skip {skip.dims}")
    out = FeatureGrid(mapped + skip.values)
    return (out, (factors, cache)) if return_tape else out


def upsample_backward(tape, dout):
    """Return ``(dgrid, dskip, dchannel_map)``."""
    factors, cache = tape
    dunpooled, dmap = dout, None
    if cache is not None:
        dunpooled, dmap, _ = layers.linear_backward(cache, dout)
    return nearest_unpool_backward(dunpooled, factors), dout, dmap


# --- Encoder / decoder --------------------------------------------------------

def _check_params(config, params):
    g = config.groups
    if len(params.encoder) != g or len(params.down) != g - 1 or len(params.up) != g - 1 \
            or len(params.decoder) != g - 1:
        raise ContractError(f"parameters do not describe a {g}-group hierarchy")


def encoder_forward(config, params, grid, return_tape=False):
    """Return ``(latent, state)`` (plus a tape when asked)."""
    _check_params(config, params)
    if grid.dims.c != config.base_width:
        raise ContractError(f"grid has {grid.dims.c} channels, hierarchy base width is {config.base_width}")
    state = HierarchyState()
    tapes = []
    for level in range(config.groups):
        ordering = cached_ordering(config.scheme, grid.dims.spatial())
        result = mamba_group(grid, params.encoder[level], ordering, return_tape=return_tape)
        grid, group_tape = result if return_tape else (result, None)
        down_tape = None
        if level < config.groups - 1:
            factors = pool_factors(grid.dims)
            state.skips.append(grid)
            state.factors.append(factors)
            result = downsample(grid, params.down[level], factors, return_tape=return_tape)
            grid, down_tape = result if return_tape else (result, None)
        tapes.append((group_tape, down_tape))
        logger.debug("encoder level %d -> %s", level, grid.dims)
    if return_tape:
        return grid, state, tapes
    return grid, state


def encoder_backward(tapes, dlatent, dskips):
    """Return ``(dgrid, encoder_grads, down_grads)``; ``dskips`` is finest level first."""
    dgrid = dlatent
    encoder_grads, down_grads = [], []
    for level in range(len(tapes) - 1, -1, -1):
        group_tape, down_tape = tapes[level]
        if down_tape is not None:
            dgrid, dmap = downsample_backward(down_tape, dgrid)
            dgrid = dgrid + dskips[level]
            down_grads.append(dmap)
        dgrid, block_grads = mamba_group_backward(group_tape, dgrid)
        encoder_grads.append(block_grads)
    encoder_grads.reverse()
    down_grads.reverse()
    return dgrid, encoder_grads, down_grads


def decoder_forward(config, params, latent, state, return_tape=False):
    """Mirror of :func:`encoder_forward`; the output has the encoder input's shape."""
    _check_params(config, params)
    if len(state.skips) != config.groups - 1 or len(state.factors) != config.groups - 1:
        raise ContractError(f"state holds {len(state.skips)} skips, expected {config.groups - 1}")
    grid = latent
    tapes = []
    for level in range(config.groups - 2, -1, -1):
        result = upsample(grid, state.skips[level], state.factors[level], params.up[level],
                          return_tape=return_tape)
        grid, up_tape = result if return_tape else (result, None)
        ordering = cached_ordering(config.scheme, grid.dims.spatial())
        result = mamba_group(grid, params.decoder[level], ordering, return_tape=return_tape)
        grid, group_tape = result if return_tape else (result, None)
        tapes.append((level, up_tape, group_tape))
    return (grid, tapes) if return_tape else grid


def decoder_backward(tapes, dout):
    """Return ``(dlatent, dskips, up_grads, decoder_grads)``."""
    levels = len(tapes)
    dskips = [None] * levels
    up_grads = [None] * levels
    decoder_grads = [None] * levels
    dgrid = dout
    for level, up_tape, group_tape in reversed(tapes):
        dgrid, decoder_grads[level] = mamba_group_backward(group_tape, dgrid)
        dgrid, dskips[level], up_grads[level] = upsample_backward(up_tape, dgrid)
    return dgrid, dskips, up_grads, decoder_grads


def hierarchy_forward(config, params, grid, return_tape=False):
    """``D_M(E_M(grid))``."""
    if not return_tape:
        latent, state = encoder_forward(config, params, grid)
        return decoder_forward(config, params, latent, state)
    latent, state, enc_tapes = encoder_forward(config, params, grid, return_tape=True)
    out, dec_tapes = decoder_forward(config, params, latent, state, return_tape=True)
    return out, (enc_tapes, dec_tapes)


def hierarchy_backward(tape, dout):
    """Return ``(dgrid, grads)`` with ``grads`` a :class:`HierarchyParams`."""
    enc_tapes, dec_tapes = tape
    dlatent, dskips, up_grads, decoder_grads = decoder_backward(dec_tapes, dout)
    dgrid, encoder_grads, down_grads = encoder_backward(enc_tapes, dlatent, dskips)
    return dgrid, HierarchyParams(encoder=encoder_grads, down=down_grads, up=up_grads, decoder=decoder_grads)


def level_dims(config, dims):
    """Spatial dims of every level for an input of ``dims``, finest first."""
    out = [dims.spatial()]
    for _ in range(config.groups - 1):
        current = out[-1]
        fx, fy, fz = pool_factors(current)
        out.append(type(current)(current.w // fx, current.h // fy, current.d // fz))
    return out