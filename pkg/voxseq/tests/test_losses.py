import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase
from scipy.special import softmax

from voxseq.exceptions import ContractError
from voxseq.losses import (
    ConfusionMatrix, LossWeights, confusion_accumulate, cross_entropy, iou_from_confusion, lovasz_softmax,
    lovasz_softmax_logits, merge_all, total_loss,
)


def brute_force_lovasz(probs, labels):
    """Lovasz extension of the Jaccard set loss, written out with explicit sets."""
    classes = sorted(set(labels))
    total = 0.0
    for c in classes:
        foreground = {i for i, label in enumerate(labels) if label == c}
        errors = [abs((1.0 if i in foreground else 0.0) - probs[i][c]) for i in range(len(labels))]
        order = sorted(range(len(labels)), key=lambda i: -errors[i])
        value = 0.0
        for rank in range(len(order)):
            chosen = set(order[:rank + 1])
            jaccard = Fraction(len(chosen), len(foreground | chosen))
            following = errors[order[rank + 1]] if rank + 1 < len(order) else 0.0
            value += (errors[order[rank]] - following) * float(jaccard)
        total += value
    return total / len(classes)


class CrossEntropyTests(SimpleTestCase):
    def test_uniform_logits(self):
        loss, _ = cross_entropy(np.zeros((1, 1, 1, 4)), np.zeros((1, 1, 1), dtype=np.uint16))
        self.assertAlmostEqual(loss, math.log(4), places=12)

    def test_two_class_example(self):
        loss, _ = cross_entropy(np.array([[0.0, math.log(3.0)]]), np.array([1]))
        self.assertAlmostEqual(loss, math.log(4.0 / 3.0), places=12)

    def test_confident_correct_prediction(self):
        loss, _ = cross_entropy(np.array([[50.0, 0.0, 0.0]]), np.array([0]))
        self.assertLess(loss, 1e-20)

    def test_ignored_voxels_are_skipped(self):
        logits = np.random.default_rng(0).standard_normal((2, 3))
        loss, grad = cross_entropy(logits, np.array([255, 255]))
        self.assertEqual(loss, 0.0)
        self.assertFalse(np.any(grad))
        loss, grad = cross_entropy(logits, np.array([1, 255]))
        self.assertAlmostEqual(loss, cross_entropy(logits[:1], np.array([1]))[0], places=12)
        self.assertFalse(np.any(grad[1]))

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(1)
        _, grad = cross_entropy(rng.standard_normal((6, 4)), rng.integers(0, 4, size=6))
        np.testing.assert_allclose(grad.sum(axis=-1), 0.0, atol=1e-15)

    def test_label_out_of_range(self):
        with self.assertRaises(ContractError):
            cross_entropy(np.zeros((1, 3)), np.array([3]))


class LovaszTests(SimpleTestCase):
    def test_perfect_probabilities(self):
        probs = np.eye(3)[[0, 1, 2, 1]]
        loss, _ = lovasz_softmax(probs, np.array([0, 1, 2, 1]))
        self.assertEqual(loss, 0.0)

    def test_single_wrong_voxel(self):
        loss, _ = lovasz_softmax(np.array([[1.0, 0.0]]), np.array([1]))
        self.assertAlmostEqual(loss, 1.0, places=12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            probs = softmax(rng.standard_normal((3, 3)), axis=-1)
            labels = rng.integers(0, 3, size=3)
            loss, _ = lovasz_softmax(probs, labels)
            expected = brute_force_lovasz(probs.tolist(), labels.tolist())
            self.assertAlmostEqual(loss, expected, delta=1e-10)

    def test_value_range(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            loss, _ = lovasz_softmax_logits(rng.standard_normal((2, 3, 4, 5)), rng.integers(0, 5, size=(2, 3, 4)))
            self.assertGreaterEqual(loss, 0.0)
            self.assertLessEqual(loss, 1.0)

    def test_all_ignored(self):
        loss, grad = lovasz_softmax(np.full((2, 2), 0.5), np.array([255, 255]))
        self.assertEqual(loss, 0.0)
        self.assertFalse(np.any(grad))

    def test_logit_version_scores_the_softmax(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((5, 3))
        labels = rng.integers(0, 3, size=5)
        self.assertEqual(lovasz_softmax_logits(logits, labels)[0],
                         lovasz_softmax(softmax(logits, axis=-1), labels)[0])


class TotalLossTests(SimpleTestCase):
    def test_unit_parts(self):
        parts = {'ce': 1.0, 'iou': 1.0, 'geo': 1.0, 'sem': 1.0, 'depth': 1.0}
        self.assertEqual(total_loss(parts), 5.0)

    def test_optional_parts_default_to_zero(self):
        self.assertEqual(total_loss({'ce': 0.5, 'iou': 0.25}, LossWeights(lambda_iou=2.0)), 1.0)

    def test_zero_weights_leave_cross_entropy(self):
        parts = {'ce': 0.7, 'iou': 3.0, 'geo': 2.0, 'sem': 2.0, 'depth': 2.0}
        self.assertAlmostEqual(total_loss(parts, LossWeights(0.0, 0.0, 0.0, 0.0)), 0.7)

    def test_required_parts(self):
        with self.assertRaises(ContractError):
            total_loss({'iou': 1.0})
        with self.assertRaises(ContractError):
            total_loss({'ce': 1.0, 'iou': 1.0, 'flow': 1.0})

    def test_negative_part_is_logged(self):
        with self.assertLogs('voxseq.losses', level='WARNING'):
            self.assertEqual(total_loss({'ce': 1.0, 'iou': 1.0, 'geo': -0.5}), 1.5)

    def test_negative_weight(self):
        with self.assertRaises(ContractError):
            LossWeights(lambda_geo=-1.0)


class ConfusionTests(SimpleTestCase):
    def test_two_class_report(self):
        cm = ConfusionMatrix(2, counts=[[3, 1], [2, 4]])
        report = iou_from_confusion(cm)
        self.assertAlmostEqual(report.per_class[0], 0.5)
        self.assertAlmostEqual(report.per_class[1], 4 / 7)
        self.assertAlmostEqual(report.class_mean, (0.5 + 4 / 7) / 2)
        self.assertAlmostEqual(report.miou, 4 / 7)
        self.assertAlmostEqual(report.geometry_iou, 4 / 7)
        self.assertEqual(report.voxels, 10)

    def test_accumulate_builds_counts(self):
        gt = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1, 1])
        pred = np.array([0, 0, 0, 1, 0, 0, 1, 1, 1, 1])
        cm = confusion_accumulate(ConfusionMatrix(2), pred, gt)
        np.testing.assert_array_equal(cm.counts, [[3, 1], [2, 4]])

    def test_perfect_prediction(self):
        labels = np.array([[0, 1], [2, 3]])
        report = iou_from_confusion(ConfusionMatrix(4).accumulate(labels, labels))
        self.assertEqual(report.per_class, (1.0, 1.0, 1.0, 1.0))
        self.assertEqual((report.miou, report.geometry_iou), (1.0, 1.0))

    def test_ignored_voxels_do_not_count(self):
        cm = ConfusionMatrix(3).accumulate(np.array([1, 2]), np.array([255, 255]))
        self.assertEqual(cm.total, 0)
        report = iou_from_confusion(cm)
        self.assertFalse(report.defined)
        self.assertIsNone(report.as_dict()['miou'])

    def test_absent_classes_are_left_out_of_the_mean(self):
        report = iou_from_confusion(ConfusionMatrix(4).accumulate(np.array([0, 1, 1]), np.array([0, 1, 1])))
        self.assertTrue(math.isnan(report.per_class[3]))
        self.assertEqual(report.miou, 1.0)

    def test_merging_is_order_independent(self):
        rng = np.random.default_rng(5)
        matrices = [ConfusionMatrix(4).accumulate(rng.integers(0, 4, 50), rng.integers(0, 4, 50)) for _ in range(4)]
        forward = merge_all(matrices, 4)
        backward = merge_all(reversed(matrices), 4)
        np.testing.assert_array_equal(forward.counts, backward.counts)
        self.assertEqual(forward.total, 200)

    def test_relabeling_occupied_classes_keeps_the_mean(self):
        rng = np.random.default_rng(6)
        gt = rng.integers(0, 4, 100)
        pred = np.where(rng.random(100) < 0.7, gt, rng.integers(0, 4, 100))
        relabel = np.array([0, 3, 1, 2])
        before = iou_from_confusion(ConfusionMatrix(4).accumulate(pred, gt))
        after = iou_from_confusion(ConfusionMatrix(4).accumulate(relabel[pred], relabel[gt]))
        self.assertAlmostEqual(before.miou, after.miou, places=12)
        self.assertAlmostEqual(before.geometry_iou, after.geometry_iou, places=12)

    def test_merge_requires_matching_shape(self):
        with self.assertRaises(ContractError):
            ConfusionMatrix(2).merge(ConfusionMatrix(3))
