"""
Discrete state space model scan and its selective (input-dependent) variant.

The recurrence is ``h_k = A_bar h_{k-1} + B_bar x_k``, ``y_k = C_bar h_k`` with
``h_0 = 0``, run left to right along the sequence axis. ``A`` is diagonal per
channel, ``A = -exp(A_log)``; discretization uses zero-order hold for ``A`` and
the Euler rule for ``B``. The selective variant computes ``B_k``, ``C_k`` and a
scalar step ``delta_k`` from each token.

Forward functions return outputs only unless ``return_tape=True``; the tape is
what the matching ``*_backward`` consumes. Backward passes run the recurrence
right to left over the saved hidden states.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .exceptions import ContractError, NumericError
from .layers import softplus

# Tokens per chunk when the forward pass does not keep a tape.
SCAN_CHUNK = 4096


@dataclass(eq=False)
class SsmParams:
    """Learnable SSM symbols over ``c`` channels and ``s`` state dimensions.

    Fixed mode uses ``b``, ``c_out`` and ``delta``; selective mode uses the
    projections ``w_b``, ``w_c``, ``w_delta`` and ``bias_delta``.
    """
    a_log: np.ndarray
    b: Optional[np.ndarray] = None
    c_out: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    w_b: Optional[np.ndarray] = None
    w_c: Optional[np.ndarray] = None
    w_delta: Optional[np.ndarray] = None
    bias_delta: Optional[np.ndarray] = None

    @property
    def selective(self):
        return self.w_b is not None

    @property
    def channels(self):
        return self.a_log.shape[0]

    @property
    def state_dim(self):
        return self.a_log.shape[1]

    @property
    def a(self):
        return -np.exp(self.a_log)


def init_ssm_params(rng, channels, state_dim, selective=True, delta_range=(0.01, 0.1), dtype=np.float64):
    """Random parameters keeping ``A_bar`` inside ``(0, 1)``."""
    a_log = np.log(rng.uniform(0.5, 1.5, size=(channels, state_dim)))
    if not selective:
        return SsmParams(
            a_log=a_log.astype(dtype),
            b=rng.uniform(-1.0, 1.0, size=state_dim).astype(dtype),
            c_out=rng.uniform(-1.0, 1.0, size=state_dim).astype(dtype) / np.sqrt(state_dim),
            delta=np.asarray(np.mean(delta_range), dtype=dtype),
        )
    bound = 1.0 / np.sqrt(channels)
    initial_delta = rng.uniform(*delta_range)
    return SsmParams(
        a_log=a_log.astype(dtype),
        w_b=rng.uniform(-bound, bound, size=(channels, state_dim)).astype(dtype),
        w_c=rng.uniform(-bound, bound, size=(channels, state_dim)).astype(dtype),
        w_delta=rng.uniform(-bound, bound, size=channels).astype(dtype),
        # inverse softplus so the initial step sits inside delta_range
        bias_delta=np.asarray(np.log(np.expm1(initial_delta)), dtype=dtype),
    )


def discretize(params, delta, b=None):
    """Return ``(A_bar, B_bar)`` of shape ``(c, s)`` for step size ``delta``.

    ``delta`` is a positive scalar or one value per channel. ``b`` overrides the
    fixed-mode input vector (selective callers pass the token's ``B_k``).
    """
    delta = np.asarray(delta, dtype=params.a_log.dtype)
    if np.any(~(delta > 0)):
        raise ContractError("delta must be strictly positive")
    b = params.b if b is None else np.asarray(b)
    if b is None:
        raise ContractError("discretize needs B: fixed-mode params or an explicit b")
    step = delta[..., None] if delta.ndim else delta
    a_bar = np.exp(step * params.a)
    b_bar = np.broadcast_to(step * b, a_bar.shape).copy()
    return a_bar, b_bar


# --- Recurrence ---------------------------------------------------------------

def _recurrence(a, u, h0=None):
    """All hidden states of ``h_k = a_k * h_{k-1} + u_k`` along axis 1."""
    a = np.broadcast_to(a, u.shape)
    h = np.empty_like(u)
    prev = np.zeros(u.shape[:1] + u.shape[2:], dtype=u.dtype) if h0 is None else h0
    for k in range(u.shape[1]):
        prev = a[:, k] * prev + u[:, k]
        h[:, k] = prev
    return h


def _recurrence_backward(a, dh):
    """Adjoint of :func:`_recurrence`: ``g_k = dh_k + a_{k+1} g_{k+1}``."""
    a = np.broadcast_to(a, dh.shape)
    g = np.empty_like(dh)
    carry = np.zeros(dh.shape[:1] + dh.shape[2:], dtype=dh.dtype)
    for k in range(dh.shape[1] - 1, -1, -1):
        gk = dh[:, k] + carry
        g[:, k] = gk
        carry = a[:, k] * gk
    return g


def _shift_right(h):
    prev = np.zeros_like(h)
    prev[:, 1:] = h[:, :-1]
    return prev


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_sequence(x, name='x'):
    if x.ndim != 3 or min(x.shape) < 1:
        raise ContractError(f"{name} must be a non-empty (b, n, c) sequence, got shape {x.shape}")


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise NumericError("input sequence contains NaN or Inf")


# --- Fixed-parameter scan -----------------------------------------------------

def ssm_scan(a_bar, b_bar, c_bar, x, return_tape=False):
    """Run the SSM recurrence over ``x`` of shape ``(b, n, c)``.

    ``a_bar``, ``b_bar`` and ``c_bar`` broadcast against ``(b, n, c, s)``: pass
    ``(c, s)`` arrays for time-invariant parameters or ``(b, n, c, s)`` for
    per-token ones. The output has the shape of ``x``.
    """
    x = np.asarray(x)
    _check_sequence(x)
    a_bar, b_bar, c_bar = (np.asarray(v, dtype=x.dtype) for v in (a_bar, b_bar, c_bar))
    try:
        full = np.broadcast_shapes(a_bar.shape, b_bar.shape, c_bar.shape, x.shape + (1,))
    except ValueError:
        raise ContractError(
            f"parameter shapes {a_bar.shape}, {b_bar.shape}, {c_bar.shape} do not fit x {x.shape}"
        ) from None
    if len(full) != 4 or full[:3] != x.shape:
        raise ContractError(f"parameters broadcast to {full}, expected (b, n, c, s) over x {x.shape}")

    u = np.array(np.broadcast_to(b_bar * x[..., None], full))
    h = _recurrence(a_bar, u)
    y = (c_bar * h).sum(axis=-1)
    if return_tape:
        return y, (a_bar, b_bar, c_bar, x, h)
    return y


def ssm_scan_backward(tape, dy):
    """Gradients ``(dA_bar, dB_bar, dC_bar, dx)`` shaped like the scan inputs."""
    a_bar, b_bar, c_bar, x, h = tape
    if dy.shape != x.shape:
        raise ContractError(f"upstream gradient shape {dy.shape} does not match output {x.shape}")
    dh = np.broadcast_to(dy[..., None] * c_bar, h.shape)
    dc = _unbroadcast(dy[..., None] * h, c_bar.shape)
    g = _recurrence_backward(a_bar, dh)
    da = _unbroadcast(g * _shift_right(h), a_bar.shape)
    db = _unbroadcast(g * x[..., None], b_bar.shape)
    dx = (g * b_bar).sum(axis=-1)
    return da, db, dc, dx


# --- Selective scan -----------------------------------------------------------

def _selective_terms(params, u):
    b_sel = u @ params.w_b
    c_sel = u @ params.w_c
    z = u @ params.w_delta + params.bias_delta
    return b_sel, c_sel, z, softplus(z)


def _selective_chunk(a, u, b_sel, delta, h0):
    a_bar = np.exp(delta[..., None, None] * a)
    drive = delta[..., None, None] * b_sel[:, :, None, :] * u[..., None]
    return a_bar, _recurrence(a_bar, drive, h0)


def selective_ssm_forward(params, u, return_tape=False):
    """Selective SSM over ``u`` of shape ``(b, n, c)``.

    Per token: ``B_k = u_k W_B``, ``C_k = u_k W_C``,
    ``delta_k = softplus(u_k W_delta + bias_delta)``; then discretize and scan.
    """
    if not params.selective:
        raise ContractError("selective_ssm_forward needs selective-mode parameters")
    u = np.asarray(u)
    _check_sequence(u, 'u')
    _check_finite(u)
    if u.shape[-1] != params.channels:
        raise ContractError(f"input has {u.shape[-1]} channels, SSM has {params.channels}")
    a = params.a
    b_sel, c_sel, z, delta = _selective_terms(params, u)

    if return_tape:
        a_bar, h = _selective_chunk(a, u, b_sel, delta, None)
        y = np.einsum('bnes,bns->bne', h, c_sel, optimize=True)
        return y, (params, u, a, b_sel, c_sel, z, delta, a_bar, h)

    n = u.shape[1]
    y = np.empty_like(u)
    carry = None
    for start in range(0, n, SCAN_CHUNK):
        part = slice(start, start + SCAN_CHUNK)
        _, h = _selective_chunk(a, u[:, part], b_sel[:, part], delta[:, part], carry)
        y[:, part] = np.einsum('bnes,bns->bne', h, c_sel[:, part], optimize=True)
        carry = h[:, -1]
    return y


def selective_ssm_backward(tape, dy):
    """Return ``(du, grads)`` where ``grads`` is an :class:`SsmParams` of gradients."""
    params, u, a, b_sel, c_sel, z, delta, a_bar, h = tape
    if dy.shape != u.shape:
        raise ContractError(f"upstream gradient shape {dy.shape} does not match output {u.shape}")

    dc_sel = np.einsum('bne,bnes->bns', dy, h, optimize=True)
    g = _recurrence_backward(a_bar, dy[..., None] * c_sel[:, :, None, :])

    # a_bar = exp(delta * A)
    decay = g * _shift_right(h) * a_bar
    ddelta = np.einsum('bnes,es->bn', decay, a, optimize=True)
    da = np.einsum('bnes,bn->es', decay, delta, optimize=True)

    # drive = delta * B_k * u
    g_u = np.einsum('bnes,bne->bns', g, u, optimize=True)
    ddelta += np.einsum('bns,bns->bn', g_u, b_sel, optimize=True)
    db_sel = g_u * delta[..., None]
    du = np.einsum('bnes,bns->bne', g, b_sel, optimize=True) * delta[..., None]

    dz = ddelta * expit(z)
    du += db_sel @ params.w_b.T + dc_sel @ params.w_c.T + dz[..., None] * params.w_delta

    grads = SsmParams(
        a_log=da * a,
        w_b=np.einsum('bne,bns->es', u, db_sel, optimize=True),
        w_c=np.einsum('bne,bns->es', u, dc_sel, optimize=True),
        w_delta=np.einsum('bne,bn->e', u, dz, optimize=True),
        bias_delta=np.asarray(dz.sum(), dtype=u.dtype),
    )
    return du, grads
