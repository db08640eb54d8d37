"""
Training objective and evaluation metrics.

``L = L_CE + l1 * L_iou + l2 * L_geo + l3 * L_sem + l4 * L_depth`` where the
cross entropy and the Lovasz-softmax term are computed here and the other three
are externally supplied scalars. Loss functions return ``(loss, gradient)``.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .exceptions import ContractError

logger = logging.getLogger(__name__)

IGNORE_LABEL = 255
LOSS_PARTS = ('ce', 'iou', 'geo', 'sem', 'depth')


@dataclass(frozen=True)
class LossWeights:
    lambda_iou: float = 1.0
    lambda_geo: float = 1.0
    lambda_sem: float = 1.0
    lambda_depth: float = 1.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if not math.isfinite(value) or value < 0:
                raise ContractError(f"{name} must be finite and >= 0, got {value}")

    def as_dict(self):
        return {
            'lambda_iou': self.lambda_iou,
            'lambda_geo': self.lambda_geo,
            'lambda_sem': self.lambda_sem,
            'lambda_depth': self.lambda_depth,
        }


def _flatten(logits, labels, ignore_label):
    """Rows of ``logits`` and ``labels`` for non-ignored voxels."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.shape[:-1] != labels.shape:
        raise ContractError(f"labels of shape {labels.shape} do not match logits {logits.shape}")
    k = logits.shape[-1]
    flat = labels.reshape(-1).astype(np.int64)
    valid = flat != ignore_label
    if np.any((flat[valid] < 0) | (flat[valid] >= k)):
        raise ContractError(f"label values must be < {k} or equal to the ignore label {ignore_label}")
    return logits.reshape(-1, k), flat, valid


# --- Cross entropy ------------------------------------------------------------

def cross_entropy(logits, labels, ignore_label=IGNORE_LABEL):
    """Mean negative log-likelihood of the true class over non-ignored voxels."""
    rows, flat, valid = _flatten(logits, labels, ignore_label)
    grad = np.zeros_like(rows)
    count = int(valid.sum())
    if count == 0:
        return 0.0, grad.reshape(np.shape(logits))
    picked = rows[valid]
    targets = flat[valid]
    logp = log_softmax(picked, axis=-1)
    loss = -logp[np.arange(count), targets].mean()
    dpicked = np.exp(logp)
    dpicked[np.arange(count), targets] -= 1.0
    grad[valid] = dpicked / count
    return float(loss), grad.reshape(np.shape(logits))


# --- Lovasz-softmax -----------------------------------------------------------

def lovasz_grad(gt_sorted):
    """Jaccard-loss increments along a ground truth sorted by decreasing error."""
    gts = gt_sorted.sum()
    intersection = gts - np.cumsum(gt_sorted)
    union = gts + np.cumsum(1.0 - gt_sorted)
    jaccard = 1.0 - intersection / union
    jaccard[1:] = jaccard[1:] - jaccard[:-1]
    return jaccard


def lovasz_softmax(probs, labels, ignore_label=IGNORE_LABEL):
    """Lovasz extension of the Jaccard loss, averaged over classes present in ``labels``."""
    rows, flat, valid = _flatten(probs, labels, ignore_label)
    grad = np.zeros_like(rows)
    if not valid.any():
        return 0.0, grad.reshape(np.shape(probs))
    p = rows[valid]
    targets = flat[valid]
    present = np.unique(targets)
    dp = np.zeros_like(p)
    total = 0.0
    for c in present:
        fg = (targets == c).astype(p.dtype)
        errors = np.abs(fg - p[:, c])
        perm = np.argsort(-errors, kind='stable')
        weights = lovasz_grad(fg[perm])
        total += float(errors[perm] @ weights)
        # d|fg - p| / dp is -1 on foreground voxels, +1 elsewhere
        dp[perm, c] = weights * (1.0 - 2.0 * fg[perm])
    grad[valid] = dp / len(present)
    return total / len(present), grad.reshape(np.shape(probs))


def lovasz_softmax_logits(logits, labels, ignore_label=IGNORE_LABEL):
    """Lovasz-softmax on ``softmax(logits)`` with the gradient taken w.r.t. the logits."""
    probs = softmax(logits, axis=-1)
    loss, dprobs = lovasz_softmax(probs, labels, ignore_label)
    dlogits = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    return loss, dlogits


def total_loss(parts, weights=None):
    """Weighted sum of the loss parts; ``ce`` and ``iou`` are required."""
    weights = weights or LossWeights()
    unknown = set(parts) - set(LOSS_PARTS)
    if unknown:
        raise ContractError(f"unknown loss parts: {sorted(unknown)}")
    for name in ('ce', 'iou'):
        if parts.get(name) is None:
            raise ContractError(f"loss part {name!r} is required")
    for name, value in parts.items():
        if value is not None and value < 0:
            logger.warning("loss part %s is negative (%s); summing it anyway", name, value)
    lam = {'ce': 1.0, 'iou': weights.lambda_iou, 'geo': weights.lambda_geo,
           'sem': weights.lambda_sem, 'depth': weights.lambda_depth}
    return sum(lam[name] * float(parts.get(name) or 0.0) for name in LOSS_PARTS)


# --- Metrics ------------------------------------------------------------------

class ConfusionMatrix:
    """``K x K`` counts, rows ground truth and columns prediction."""

    def __init__(self, classes, ignore_label=IGNORE_LABEL, counts=None):
        if classes < 2:
            raise ContractError(f"need at least 2 classes, got {classes}")
        self.classes = classes
        self.ignore_label = ignore_label
        self.counts = np.zeros((classes, classes), dtype=np.int64) if counts is None \
            else np.array(counts, dtype=np.int64)
        if self.counts.shape != (classes, classes):
            raise ContractError(f"counts must be {classes}x{classes}, got {self.counts.shape}")

    def accumulate(self, prediction, ground_truth):
        """Add one batch of predicted / true labels; returns ``self``."""
        pred = np.asarray(prediction).reshape(-1).astype(np.int64)
        gt = np.asarray(ground_truth).reshape(-1).astype(np.int64)
        if pred.shape != gt.shape:
            raise ContractError(f"{pred.size} predictions for {gt.size} labels")
        valid = gt != self.ignore_label
        pred, gt = pred[valid], gt[valid]
        k = self.classes
        if np.any((gt < 0) | (gt >= k) | (pred < 0) | (pred >= k)):
            raise ContractError(f"label values must be < {k} or equal to the ignore label {self.ignore_label}")
        self.counts += np.bincount(gt * k + pred, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other):
        if other.classes != self.classes or other.ignore_label != self.ignore_label:
            raise ContractError("cannot merge confusion matrices of different shape or ignore label")
        return ConfusionMatrix(self.classes, self.ignore_label, self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())


def confusion_accumulate(cm, prediction, ground_truth):
    return cm.accumulate(prediction, ground_truth)


@dataclass(frozen=True)
class IouReport:
    """Per-class IoU (NaN where undefined), semantic mIoU and geometry IoU."""
    per_class: tuple
    miou: float
    class_mean: float
    geometry_iou: float
    voxels: int

    @property
    def defined(self):
        return self.voxels > 0 and not math.isnan(self.miou)

    def as_dict(self):
        def clean(value):
            return None if value is None or math.isnan(value) else float(value)

        return {
            'per_class': [clean(v) for v in self.per_class],
            'miou': clean(self.miou),
            'class_mean': clean(self.class_mean),
            'geometry_iou': clean(self.geometry_iou),
            'voxels': self.voxels,
            'defined': self.defined,
        }


def _ratio(num, den):
    return float(num) / float(den) if den else math.nan


def _nanmean(values):
    values = [v for v in values if not math.isnan(v)]
    return sum(values) / len(values) if values else math.nan


def iou_from_confusion(cm):
    """IoU per class, mIoU over classes 1..K-1 and occupied-vs-free IoU.

    A class that is neither present nor predicted has an undefined IoU and is
    left out of the means.
    """
    counts = cm.counts
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    per_class = tuple(_ratio(tp[k], tp[k] + fp[k] + fn[k]) for k in range(cm.classes))
    geo_tp = counts[1:, 1:].sum()
    geo_den = geo_tp + counts[0, 1:].sum() + counts[1:, 0].sum()
    return IouReport(
        per_class=per_class,
        miou=_nanmean(per_class[1:]),
        class_mean=_nanmean(per_class),
        geometry_iou=_ratio(geo_tp, geo_den),
        voxels=cm.total,
    )


def merge_all(matrices, classes, ignore_label=IGNORE_LABEL):
    """Fold ``matrices`` in the given order into one matrix."""
    total = ConfusionMatrix(classes, ignore_label)
    for cm in matrices:
        total = total.merge(cm)
    return total
