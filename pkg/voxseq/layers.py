"""
Differentiable building blocks of the Mamba block.

Every ``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
takes that cache plus the upstream gradient. Sequences are ``(b, n, c)`` arrays.
"""
import numpy as np
from scipy.special import expit

from .exceptions import ContractError

LN_EPS = 1e-5


def _check_grad(dy, shape):
    if np.shape(dy) != tuple(shape):
        raise ContractError(f"upstream gradient shape {np.shape(dy)} does not match output {tuple(shape)}")


# --- Linear -------------------------------------------------------------------

def linear_forward(x, weight, bias=None):
    """``y = x @ weight (+ bias)`` over the last axis."""
    if x.shape[-1] != weight.shape[0]:
        raise ContractError(f"input width {x.shape[-1]} does not match weight {weight.shape}")
    y = x @ weight
    if bias is not None:
        y = y + bias
    return y, (x, weight, bias is not None)


def linear_backward(cache, dy):
    x, weight, has_bias = cache
    _check_grad(dy, x.shape[:-1] + (weight.shape[1],))
    dx = dy @ weight.T
    dweight = x.reshape(-1, x.shape[-1]).T @ dy.reshape(-1, dy.shape[-1])
    dbias = dy.reshape(-1, dy.shape[-1]).sum(axis=0) if has_bias else None
    return dx, dweight, dbias


# --- LayerNorm ----------------------------------------------------------------

def layer_norm_forward(x, gain, bias, eps=LN_EPS):
    if x.shape[-1] != gain.shape[0]:
        raise ContractError(f"input width {x.shape[-1]} does not match layer norm width {gain.shape[0]}")
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    return xhat * gain + bias, (xhat, inv_std, gain)


def layer_norm_backward(cache, dy):
    xhat, inv_std, gain = cache
    _check_grad(dy, xhat.shape)
    axes = tuple(range(dy.ndim - 1))
    dgain = (dy * xhat).sum(axis=axes)
    dbias = dy.sum(axis=axes)
    dxhat = dy * gain
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


# --- Causal depthwise Conv1d --------------------------------------------------

def conv1d_forward(x, kernel, bias):
    """Depthwise causal convolution along the sequence axis.

    ``y[t, e] = bias[e] + sum_j kernel[e, j] * x[t - (k - 1) + j, e]`` with zero
    left padding, so the output keeps the input length.
    """
    b, n, e = x.shape
    if kernel.shape[0] != e:
        raise ContractError(f"input has {e} channels, kernel has {kernel.shape[0]}")
    k = kernel.shape[1]
    padded = np.concatenate([np.zeros((b, k - 1, e), dtype=x.dtype), x], axis=1)
    y = np.broadcast_to(bias, (b, n, e)).copy()
    for j in range(k):
        y += kernel[:, j] * padded[:, j:j + n]
    return y, (padded, kernel)


def conv1d_backward(cache, dy):
    padded, kernel = cache
    b, total, e = padded.shape
    k = kernel.shape[1]
    n = total - (k - 1)
    _check_grad(dy, (b, n, e))
    dpadded = np.zeros_like(padded)
    dkernel = np.empty_like(kernel)
    for j in range(k):
        dpadded[:, j:j + n] += kernel[:, j] * dy
        dkernel[:, j] = (padded[:, j:j + n] * dy).sum(axis=(0, 1))
    dbias = dy.sum(axis=(0, 1))
    return dpadded[:, k - 1:], dkernel, dbias


# --- Activations --------------------------------------------------------------

def silu_forward(x):
    s = expit(x)
    return x * s, (x, s)


def silu_backward(cache, dy):
    x, s = cache
    return dy * s * (1.0 + x * (1.0 - s))


def softplus(x):
    return np.logaddexp(0.0, x)
