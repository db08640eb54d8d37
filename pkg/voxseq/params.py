"""
Helpers for parameter trees: dataclasses whose fields hold numpy arrays, other
parameter dataclasses, lists of them, or ``None``.
"""
import dataclasses

import numpy as np


def iter_arrays(tree, prefix=''):
    """Yield ``(path, array)`` for every array leaf in a stable order."""
    if tree is None:
        return
    if isinstance(tree, np.ndarray):
        yield prefix, tree
    elif dataclasses.is_dataclass(tree):
        for f in dataclasses.fields(tree):
            yield from iter_arrays(getattr(tree, f.name), f"{prefix}/{f.name}" if prefix else f.name)
    elif isinstance(tree, (list, tuple)):
        for i, item in enumerate(tree):
            yield from iter_arrays(item, f"{prefix}/{i}" if prefix else str(i))
    else:
        raise TypeError(f"unsupported parameter leaf at {prefix!r}: {type(tree).__name__}")


def map_arrays(fn, tree):
    """Rebuild ``tree`` with every array leaf replaced by ``fn(leaf)``."""
    if tree is None:
        return None
    if isinstance(tree, np.ndarray):
        return fn(tree)
    if dataclasses.is_dataclass(tree):
        return dataclasses.replace(tree, **{
            f.name: map_arrays(fn, getattr(tree, f.name)) for f in dataclasses.fields(tree) if f.init
        })
    if isinstance(tree, (list, tuple)):
        return type(tree)(map_arrays(fn, item) for item in tree)
    raise TypeError(f"unsupported parameter leaf: {type(tree).__name__}")


def zeros_like(tree):
    return map_arrays(np.zeros_like, tree)


def descend(params, grads, lr):
    """Plain gradient descent, in place: ``p -= lr * g`` for matching leaves."""
    grad_leaves = dict(iter_arrays(grads))
    for path, value in iter_arrays(params):
        grad = grad_leaves.get(path)
        if grad is not None:
            value -= lr * grad


def accumulate(total, grads):
    """Add ``grads`` into ``total`` in place (paths missing from ``grads`` are skipped)."""
    grad_leaves = dict(iter_arrays(grads))
    for path, value in iter_arrays(total):
        grad = grad_leaves.get(path)
        if grad is not None:
            value += grad
    return total


def load_arrays(tree, arrays):
    """Copy ``arrays`` (a mapping path -> array) into the leaves of ``tree``."""
    for path, value in iter_arrays(tree):
        if path not in arrays:
            raise KeyError(f"missing parameter {path!r}")
        source = np.asarray(arrays[path])
        if source.shape != value.shape:
            raise ValueError(f"parameter {path!r} has shape {source.shape}, expected {value.shape}")
        value[...] = source
    return tree
