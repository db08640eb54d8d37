import json
import os
import tempfile
import unittest
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from voxseq.exceptions import ContractError, DivergenceError, FormatError
from voxseq.grid import GridDims
from voxseq.losses import ConfusionMatrix, iou_from_confusion
from voxseq.params import iter_arrays
from voxseq.synth import generate_scene
from voxseq.training import (
    TrainConfig, evaluate, init_model, load_model, model_forward, save_model, train_to_files, train_toy,
)

SLOW = os.environ.get('VOXSEQ_SLOW_TESTS') == '1'


def tiny_config(**kwargs):
    options = dict(steps=2, dims=GridDims(4, 4, 2), groups=2, blocks_per_group=1, base_width=4, state_dim=2,
                   channels=4, lidar_channels=2, eval_every=1, eval_scenes=2)
    options.update(kwargs)
    return TrainConfig(**options)


class TrainConfigTests(SimpleTestCase):
    def test_dict_round_trip(self):
        config = tiny_config(scheme='hp-morton2d', z_snake=True)
        data = json.loads(json.dumps(config.to_dict()))
        self.assertEqual(data['dims'], '4x4x2')
        self.assertEqual(TrainConfig.from_dict(data), config)

    def test_invalid_values(self):
        for kwargs in ({'steps': 0}, {'lr': -0.1}, {'lr': float('inf')}, {'lidar_channels': 9},
                       {'precision': 'float16'}, {'scheme': 'peano'}, {'scheme': 'raster-xyz', 'z_snake': True},
                       {'lambda_iou': -1.0}, {'classes': 1}, {'seed': 999_999, 'batch_size': 2}):
            with self.assertRaises(ContractError, msg=str(kwargs)):
                tiny_config(**kwargs)

    def test_unknown_keys(self):
        with self.assertRaises(ContractError):
            TrainConfig.from_dict({'steps': 1, 'momentum': 0.9})

    def test_seed_ranges(self):
        config = tiny_config(seed=10, batch_size=3, eval_seed_base=500, eval_scenes=2)
        self.assertEqual(list(config.train_seeds()), [10, 11, 12])
        self.assertEqual(list(config.eval_seeds()), [500, 501])


class TrainToyTests(SimpleTestCase):
    def test_zero_learning_rate_keeps_the_loss(self):
        result = train_toy(tiny_config(steps=3, lr=0.0))
        losses = [row['loss'] for row in result.log]
        self.assertEqual(losses, [losses[0]] * 3)
        initial = init_model(result.config)
        for (name, value), (_, start) in zip(iter_arrays(result.params), iter_arrays(initial)):
            np.testing.assert_array_equal(value, start, err_msg=name)

    def test_reproducible(self):
        config = tiny_config(batch_size=2)
        self.assertEqual(train_toy(config).log, train_toy(config).log)

    def test_single_step(self):
        result = train_toy(tiny_config(steps=1, eval_every=50))
        self.assertEqual(len(result.log), 1)
        self.assertEqual(result.log[0]['step'], 1)
        self.assertIn('miou', result.log[0])
        self.assertIsNotNone(result.report)

    def test_evaluation_schedule(self):
        result = train_toy(tiny_config(steps=5, eval_every=2))
        self.assertEqual([row['step'] for row in result.log if 'miou' in row], [2, 4, 5])

    def test_log_rows_split_the_loss(self):
        config = tiny_config(lambda_iou=0.5)
        row = train_toy(config).log[0]
        self.assertAlmostEqual(row['loss'], row['ce'] + 0.5 * row['lovasz'], places=12)
        self.assertGreater(row['ce'], 0.0)

    def test_divergence(self):
        with mock.patch('voxseq.training.total_loss', return_value=float('nan')):
            with self.assertRaises(DivergenceError) as ctx:
                train_toy(tiny_config())
        self.assertEqual(ctx.exception.step, 1)

    def test_on_row_sees_every_row(self):
        rows = []
        train_toy(tiny_config(steps=3), on_row=rows.append)
        self.assertEqual([row['step'] for row in rows], [1, 2, 3])


class EvaluateTests(SimpleTestCase):
    def test_no_scenes(self):
        config = tiny_config()
        report = evaluate(config, init_model(config), seeds=[])
        self.assertFalse(report.defined)
        self.assertEqual(report.voxels, 0)

    def test_threads_do_not_change_the_result(self):
        config = tiny_config(eval_scenes=4)
        params = init_model(config)
        self.assertEqual(evaluate(config, params, workers=1), evaluate(config, params, workers=3))

    def test_counts_every_voxel(self):
        config = tiny_config(eval_scenes=3)
        self.assertEqual(evaluate(config, init_model(config)).voxels, 3 * 32)

    def test_oracle_predictor_scores_one(self):
        confusion = ConfusionMatrix(4)
        for seed in range(5):
            scene = generate_scene(seed, GridDims(16, 16, 8), 4, channels=4, noise=0.0, embedding=np.eye(4))
            confusion.accumulate(scene.features.values.argmax(axis=-1), scene.labels)
        report = iou_from_confusion(confusion)
        self.assertEqual(report.miou, 1.0)
        self.assertEqual(report.geometry_iou, 1.0)

    def test_forward_output_shape(self):
        config = tiny_config(classes=5)
        scene = generate_scene(0, config.dims, 5, channels=4)
        prediction = model_forward(config, init_model(config), scene.features)
        self.assertEqual(prediction.logits.shape, (2, 4, 4, 5))


class ParameterFileTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def test_round_trip(self):
        config = tiny_config(scheme='hilbert3d')
        result = train_toy(config)
        save_model(self.path('params.npz'), config, result.params)
        loaded_config, params = load_model(self.path('params.npz'))
        self.assertEqual(loaded_config, config)
        for (name, value), (_, expected) in zip(iter_arrays(params), iter_arrays(result.params)):
            np.testing.assert_array_equal(value, expected, err_msg=name)
        self.assertEqual(evaluate(loaded_config, params), result.report)

    def test_train_to_files(self):
        config = tiny_config(steps=3)
        result = train_to_files(config, self.path('train.jsonl'), self.path('params.npz'))
        with open(self.path('train.jsonl')) as fh:
            rows = [json.loads(line) for line in fh]
        self.assertEqual(rows, result.log)
        self.assertEqual(load_model(self.path('params.npz'))[0], config)

    def test_rejects_other_files(self):
        with open(self.path('junk.npz'), 'wb') as fh:
            fh.write(b'not an archive')
        with self.assertRaises(FormatError):
            load_model(self.path('junk.npz'))
        np.savez(self.path('bare.npz'), weights=np.zeros(3))
        with self.assertRaises(FormatError):
            load_model(self.path('bare.npz'))


@unittest.skipUnless(SLOW, "set VOXSEQ_SLOW_TESTS=1 to run the full training runs")
class ConvergenceTests(SimpleTestCase):
    def test_default_run_learns_the_scenes(self):
        config = TrainConfig()
        self.assertLessEqual(evaluate(config, init_model(config)).miou, 0.35)
        result = train_toy(config, workers=0)
        self.assertLess(result.final_loss, 0.5 * result.initial_loss)
        self.assertGreaterEqual(result.final_miou, 0.7)
