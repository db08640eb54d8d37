"""
Finite-difference verification of the analytic backward passes.

Every check builds a small random instance, reduces the operation's output to
a scalar with a fixed random projection and compares the analytic gradient of
each input and parameter with central differences. The error of one array is
the largest entrywise ``|a - n| / max(|a| + |n|, ERROR_FLOOR)``.
"""
from dataclasses import dataclass

import numpy as np

from .. import layers
from ..grid import FeatureGrid, GridDims
from ..hierarchy import HierarchyConfig, hierarchy_backward, hierarchy_forward, init_hierarchy
from ..losses import cross_entropy, lovasz_softmax_logits
from ..mamba import init_mamba_block, mamba_block_backward, mamba_block_forward
from ..occ_head import init_head, predict, predict_backward
from ..ordering import OrderingScheme
from ..params import iter_arrays
from ..ssm import init_ssm_params, selective_ssm_backward, selective_ssm_forward, ssm_scan, ssm_scan_backward

FD_STEP = 1e-5
TOLERANCE = 1e-5
ERROR_FLOOR = 1e-3


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    max_error: float
    arrays: int
    entries: int

    @property
    def passed(self):
        return self.max_error < TOLERANCE


def numerical_gradient(fn, x, step=FD_STEP):
    """Central differences of the scalar ``fn()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros(x.shape, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        original = x[idx]
        x[idx] = original + step
        plus = fn()
        x[idx] = original - step
        minus = fn()
        x[idx] = original
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=ERROR_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.abs(analytic) + np.abs(numeric), floor)
    return float((np.abs(analytic - numeric) / scale).max())


def compare(name, loss_fn, arrays, grads, step=FD_STEP):
    """Check ``grads[path]`` against finite differences for every ``arrays[path]``."""
    worst = 0.0
    entries = 0
    for path, value in arrays.items():
        numeric = numerical_gradient(loss_fn, value, step)
        worst = max(worst, relative_error(grads[path], numeric))
        entries += value.size
    return GradCheckResult(name, worst, len(arrays), entries)


def _projection(rng, shape):
    return rng.standard_normal(shape)


# --- Individual checks --------------------------------------------------------

def check_linear(rng):
    x = rng.standard_normal((2, 3, 4))
    weight = rng.standard_normal((4, 5))
    bias = rng.standard_normal(5)
    r = _projection(rng, (2, 3, 5))

    def loss():
        return float((layers.linear_forward(x, weight, bias)[0] * r).sum())

    _, cache = layers.linear_forward(x, weight, bias)
    dx, dw, db = layers.linear_backward(cache, r)
    return compare('linear', loss, {'x': x, 'weight': weight, 'bias': bias},
                   {'x': dx, 'weight': dw, 'bias': db})


def check_layer_norm(rng):
    x = rng.standard_normal((2, 3, 6))
    gain = rng.uniform(0.5, 1.5, size=6)
    bias = rng.standard_normal(6)
    r = _projection(rng, x.shape)

    def loss():
        return float((layers.layer_norm_forward(x, gain, bias)[0] * r).sum())

    _, cache = layers.layer_norm_forward(x, gain, bias)
    dx, dgain, dbias = layers.layer_norm_backward(cache, r)
    return compare('layer_norm', loss, {'x': x, 'gain': gain, 'bias': bias},
                   {'x': dx, 'gain': dgain, 'bias': dbias})


def check_conv1d(rng):
    x = rng.standard_normal((2, 7, 3))
    kernel = rng.standard_normal((3, 4))
    bias = rng.standard_normal(3)
    r = _projection(rng, x.shape)

    def loss():
        return float((layers.conv1d_forward(x, kernel, bias)[0] * r).sum())

    _, cache = layers.conv1d_forward(x, kernel, bias)
    dx, dkernel, dbias = layers.conv1d_backward(cache, r)
    return compare('conv1d', loss, {'x': x, 'kernel': kernel, 'bias': bias},
                   {'x': dx, 'kernel': dkernel, 'bias': dbias})


def check_ssm_scan(rng, n=16, channels=4, state_dim=8):
    a_bar = rng.uniform(0.5, 0.95, size=(channels, state_dim))
    b_bar = rng.standard_normal((channels, state_dim))
    c_bar = rng.standard_normal((channels, state_dim))
    x = rng.standard_normal((1, n, channels))
    r = _projection(rng, x.shape)

    def loss():
        return float((ssm_scan(a_bar, b_bar, c_bar, x) * r).sum())

    _, tape = ssm_scan(a_bar, b_bar, c_bar, x, return_tape=True)
    da, db, dc, dx = ssm_scan_backward(tape, r)
    return compare('ssm_scan', loss, {'a_bar': a_bar, 'b_bar': b_bar, 'c_bar': c_bar, 'x': x},
                   {'a_bar': da, 'b_bar': db, 'c_bar': dc, 'x': dx})


def check_selective_ssm(rng, n=12, channels=4, state_dim=4):
    params = init_ssm_params(rng, channels, state_dim)
    u = rng.standard_normal((1, n, channels))
    r = _projection(rng, u.shape)

    def loss():
        return float((selective_ssm_forward(params, u) * r).sum())

    _, tape = selective_ssm_forward(params, u, return_tape=True)
    du, grads = selective_ssm_backward(tape, r)
    arrays = dict(iter_arrays(params, 'ssm'), u=u)
    return compare('selective_ssm', loss, arrays, dict(iter_arrays(grads, 'ssm'), u=du))


def check_mamba_block(rng, n=10, model_dim=4, state_dim=4):
    params = init_mamba_block(rng, model_dim, state_dim=state_dim)
    v = rng.standard_normal((1, n, model_dim))
    r = _projection(rng, v.shape)

    def loss():
        return float((mamba_block_forward(params, v) * r).sum())

    _, tape = mamba_block_forward(params, v, return_tape=True)
    dv, grads = mamba_block_backward(tape, r)
    arrays = dict(iter_arrays(params, 'block'), v=v)
    return compare('mamba_block', loss, arrays, dict(iter_arrays(grads, 'block'), v=dv))


def _labels(rng, shape, classes, ignore_fraction=0.2):
    labels = rng.integers(0, classes, size=shape)
    labels[rng.random(shape) < ignore_fraction] = 255
    return labels


def check_cross_entropy(rng, voxels=12, classes=5):
    logits = rng.standard_normal((voxels, classes))
    labels = _labels(rng, (voxels,), classes)

    def loss():
        return cross_entropy(logits, labels)[0]

    _, grad = cross_entropy(logits, labels)
    return compare('cross_entropy', loss, {'logits': logits}, {'logits': grad})


def check_lovasz_softmax(rng, voxels=12, classes=4):
    logits = 2.0 * rng.standard_normal((voxels, classes))
    labels = _labels(rng, (voxels,), classes)

    def loss():
        return lovasz_softmax_logits(logits, labels)[0]

    _, grad = lovasz_softmax_logits(logits, labels)
    return compare('lovasz_softmax', loss, {'logits': logits}, {'logits': grad})


def check_occ_head(rng, classes=4):
    grid = FeatureGrid(rng.standard_normal((1, 2, 2, 3)))
    head = init_head(rng, 3, classes)
    target = GridDims(4, 3, 2)
    r = _projection(rng, target.shape + (classes,))

    def loss():
        return float((predict(grid, head, target).logits * r).sum())

    _, tape = predict(grid, head, target, return_tape=True)
    dgrid, grads = predict_backward(tape, r)
    arrays = dict(iter_arrays(head, 'head'), grid=grid.values)
    return compare('occ_head', loss, arrays, dict(iter_arrays(grads, 'head'), grid=dgrid))


def check_hierarchy(rng):
    config = HierarchyConfig(groups=2, blocks_per_group=1, scheme=OrderingScheme('hp-hilbert2d'),
                             base_width=2, state_dim=2, conv_width=2)
    params = init_hierarchy(rng, config)
    grid = FeatureGrid(rng.standard_normal((2, 2, 3, 2)))
    r = _projection(rng, grid.values.shape)

    def loss():
        return float((hierarchy_forward(config, params, grid).values * r).sum())

    _, tape = hierarchy_forward(config, params, grid, return_tape=True)
    dgrid, grads = hierarchy_backward(tape, r)
    arrays = dict(iter_arrays(params, 'hierarchy'), grid=grid.values)
    return compare('hierarchy', loss, arrays, dict(iter_arrays(grads, 'hierarchy'), grid=dgrid))


CHECKS = {
    'ssm_scan': check_ssm_scan,
    'selective_ssm': check_selective_ssm,
    'mamba_block': check_mamba_block,
    'layer_norm': check_layer_norm,
    'conv1d': check_conv1d,
    'linear': check_linear,
    'cross_entropy': check_cross_entropy,
    'lovasz_softmax': check_lovasz_softmax,
    'occ_head': check_occ_head,
    'hierarchy': check_hierarchy,
}


def run_checks(names=None, instances=20, seed=0):
    """Run ``instances`` random instances per check; one worst-case result per name."""
    names = list(names or CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise KeyError(f"unknown gradient checks: {', '.join(unknown)}")
    results = []
    for offset, name in enumerate(names):
        rng = np.random.default_rng([seed, offset])
        runs = [CHECKS[name](rng) for _ in range(instances)]
        worst = max(runs, key=lambda result: result.max_error)
        results.append(GradCheckResult(name, worst.max_error, worst.arrays, sum(r.entries for r in runs)))
    return results
