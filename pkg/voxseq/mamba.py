"""
The Mamba block:

    V1  = LN(V)
    V2  = SelectiveSSM(SiLU(Conv1d(Linear_main(V1))))
    out = V + Linear_out(V2 * SiLU(Linear_gate(V1)))

The residual term is part of the block, so output and input shapes agree.
"""
from dataclasses import dataclass

import numpy as np

from . import layers
from .exceptions import ContractError
from .ssm import SsmParams, init_ssm_params, selective_ssm_backward, selective_ssm_forward

DEFAULT_STATE_DIM = 8
DEFAULT_CONV_WIDTH = 4


@dataclass(eq=False)
class MambaBlockParams:
    ln_gain: np.ndarray
    ln_bias: np.ndarray
    in_proj_main: np.ndarray
    in_proj_gate: np.ndarray
    conv_kernel: np.ndarray
    conv_bias: np.ndarray
    ssm: SsmParams
    out_proj: np.ndarray

    @property
    def model_dim(self):
        return self.ln_gain.shape[0]

    @property
    def expand_dim(self):
        return self.in_proj_main.shape[1]

    def validate(self):
        c, e = self.model_dim, self.expand_dim
        expected = {
            'ln_bias': (c,),
            'in_proj_main': (c, e),
            'in_proj_gate': (c, e),
            'conv_bias': (e,),
            'out_proj': (e, c),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ContractError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.conv_kernel.ndim != 2 or self.conv_kernel.shape[0] != e or self.conv_kernel.shape[1] < 1:
            raise ContractError(f"conv_kernel has shape {self.conv_kernel.shape}, expected ({e}, k>=1)")
        if self.ssm.channels != e or not self.ssm.selective:
            raise ContractError("block SSM must be selective over the expanded channels")


def init_mamba_block(rng, model_dim, expand_dim=None, state_dim=DEFAULT_STATE_DIM,
                     conv_width=DEFAULT_CONV_WIDTH, dtype=np.float64):
    """Uniform ``+-1/sqrt(fan_in)`` projections, unit LayerNorm, selective SSM."""
    e = expand_dim or 2 * model_dim

    def uniform(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    return MambaBlockParams(
        ln_gain=np.ones(model_dim, dtype=dtype),
        ln_bias=np.zeros(model_dim, dtype=dtype),
        in_proj_main=uniform(model_dim, (model_dim, e)),
        in_proj_gate=uniform(model_dim, (model_dim, e)),
        conv_kernel=uniform(conv_width, (e, conv_width)),
        conv_bias=np.zeros(e, dtype=dtype),
        ssm=init_ssm_params(rng, e, state_dim, dtype=dtype),
        out_proj=uniform(e, (e, model_dim)),
    )


def _check_input(params, v):
    v = np.asarray(v)
    if v.ndim != 3 or min(v.shape) < 1:
        raise ContractError(f"block input must be a non-empty (b, n, c) sequence, got {v.shape}")
    if v.shape[-1] != params.model_dim:
        raise ContractError(f"input has {v.shape[-1]} channels, block expects {params.model_dim}")
    return v


def mamba_block_forward(params, v, return_tape=False):
    """Apply one Mamba block to ``v`` of shape ``(b, n, c)``."""
    v = _check_input(params, v)
    v1, ln_cache = layers.layer_norm_forward(v, params.ln_gain, params.ln_bias)
    main, main_cache = layers.linear_forward(v1, params.in_proj_main)
    conv, conv_cache = layers.conv1d_forward(main, params.conv_kernel, params.conv_bias)
    act, act_cache = layers.silu_forward(conv)
    if return_tape:
        v2, ssm_tape = selective_ssm_forward(params.ssm, act, return_tape=True)
    else:
        v2 = selective_ssm_forward(params.ssm, act)
    gate_in, gate_cache = layers.linear_forward(v1, params.in_proj_gate)
    gate, gate_act_cache = layers.silu_forward(gate_in)
    mixed = v2 * gate
    update, out_cache = layers.linear_forward(mixed, params.out_proj)
    out = v + update
    if not return_tape:
        return out
    tape = (ln_cache, main_cache, conv_cache, act_cache, ssm_tape,
            gate_cache, gate_act_cache, v2, gate, out_cache)
    return out, tape


def mamba_block_backward(tape, dout):
    """Return ``(dv, grads)`` with ``grads`` a :class:`MambaBlockParams` of gradients."""
    (ln_cache, main_cache, conv_cache, act_cache, ssm_tape,
     gate_cache, gate_act_cache, v2, gate, out_cache) = tape
    if dout.shape != v2.shape[:-1] + (out_cache[1].shape[1],):
        raise ContractError(f"upstream gradient shape {dout.shape} does not match block output")

    dmixed, dout_proj, _ = layers.linear_backward(out_cache, dout)
    dv2 = dmixed * gate
    dgate = dmixed * v2
    dgate_in = layers.silu_backward(gate_act_cache, dgate)
    dv1_gate, din_gate, _ = layers.linear_backward(gate_cache, dgate_in)

    dact, ssm_grads = selective_ssm_backward(ssm_tape, dv2)
    dconv = layers.silu_backward(act_cache, dact)
    dmain, dkernel, dconv_bias = layers.conv1d_backward(conv_cache, dconv)
    dv1_main, din_main, _ = layers.linear_backward(main_cache, dmain)

    dv, dgain, dbias = layers.layer_norm_backward(ln_cache, dv1_gate + dv1_main)
    dv = dv + dout

    grads = MambaBlockParams(
        ln_gain=dgain,
        ln_bias=dbias,
        in_proj_main=din_main,
        in_proj_gate=din_gate,
        conv_kernel=dkernel,
        conv_bias=dconv_bias,
        ssm=ssm_grads,
        out_proj=dout_proj,
    )
    return dv, grads
