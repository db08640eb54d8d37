import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from voxseq.exceptions import ContractError, NumericError
from voxseq.layers import softplus
from voxseq.ssm import (
    SsmParams, discretize, init_ssm_params, selective_ssm_backward, selective_ssm_forward, ssm_scan,
    ssm_scan_backward,
)


def scalar_params(a=-1.0, b=1.0, c=1.0, delta=1.0):
    return SsmParams(a_log=np.array([[math.log(-a)]]), b=np.array([b]), c_out=np.array([c]),
                     delta=np.array(delta))


class DiscretizeTests(SimpleTestCase):
    def test_half_life_step(self):
        a_bar, b_bar = discretize(scalar_params(b=2.0), math.log(2.0))
        self.assertAlmostEqual(float(a_bar[0, 0]), 0.5, places=12)
        self.assertAlmostEqual(float(b_bar[0, 0]), 2.0 * math.log(2.0), places=12)

    def test_closed_forms(self):
        a_bar, b_bar = discretize(scalar_params(), 0.1)
        self.assertAlmostEqual(float(a_bar[0, 0]), math.exp(-0.1), places=15)
        self.assertAlmostEqual(float(b_bar[0, 0]), 0.1, places=15)

    def test_tiny_step_leaves_the_state_alone(self):
        a_bar, b_bar = discretize(scalar_params(), 1e-12)
        self.assertAlmostEqual(float(a_bar[0, 0]), 1.0, places=10)
        self.assertAlmostEqual(float(b_bar[0, 0]), 0.0, places=10)

    def test_step_must_be_positive(self):
        for delta in (0.0, -1.0, float('nan')):
            with self.assertRaises(ContractError):
                discretize(scalar_params(), delta)

    def test_decay_stays_inside_unit_interval(self):
        params = init_ssm_params(np.random.default_rng(0), 6, 4, selective=False)
        a_bar, _ = discretize(params, np.full(6, 0.3))
        self.assertTrue(np.all((a_bar > 0) & (a_bar < 1)))


class ScanTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    def random_scan_inputs(self, n=12, c=3, s=4):
        a = self.rng.uniform(0.1, 0.9, size=(c, s))
        b = self.rng.standard_normal((c, s))
        cc = self.rng.standard_normal((c, s))
        return a, b, cc, self.rng.standard_normal((1, n, c))

    def test_hand_computed_recurrence(self):
        y = ssm_scan(np.array([[0.5]]), np.array([[1.0]]), np.array([[2.0]]), np.array([[[1.0], [2.0], [3.0]]]))
        np.testing.assert_allclose(y[0, :, 0], [2.0, 5.0, 8.5])

    def test_decaying_impulse(self):
        y = ssm_scan(np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]), np.array([[[1.0], [0.0], [1.0]]]))
        np.testing.assert_allclose(y[0, :, 0], [1.0, 0.5, 1.25], rtol=0, atol=1e-12)

    def test_running_sum(self):
        y = ssm_scan(np.array([[1.0]]), np.array([[1.0]]), np.array([[1.0]]), np.ones((1, 4, 1)))
        np.testing.assert_array_equal(y[0, :, 0], [1.0, 2.0, 3.0, 4.0])

    def test_zero_decay_is_memoryless(self):
        _, b, c, x = self.random_scan_inputs()
        y = ssm_scan(np.zeros_like(b), b, c, x)
        np.testing.assert_allclose(y, (c * b).sum(axis=-1) * x, rtol=1e-12, atol=1e-14)

    def test_linear_in_the_input(self):
        a, b, c, x = self.random_scan_inputs()
        x2 = self.rng.standard_normal(x.shape)
        lhs = ssm_scan(a, b, c, 2.0 * x + 3.0 * x2)
        rhs = 2.0 * ssm_scan(a, b, c, x) + 3.0 * ssm_scan(a, b, c, x2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_causal(self):
        a, b, c, x = self.random_scan_inputs()
        x2 = x.copy()
        x2[:, 7] += 5.0
        np.testing.assert_array_equal(ssm_scan(a, b, c, x2)[:, :7], ssm_scan(a, b, c, x)[:, :7])

    def test_bounded_by_geometric_sum(self):
        a, b, c, x = self.random_scan_inputs(n=200)
        y = ssm_scan(a, b, c, x)
        bound = (np.abs(c) * np.abs(b) / (1 - a)).sum(axis=-1) * np.abs(x).max()
        self.assertTrue(np.all(np.abs(y[0]) <= bound + 1e-12))

    def test_two_step_derivative(self):
        # y2 = C (A B x1 + B x2), so dy2/dA = C B x1
        a, b, c = np.array([[0.7]]), np.array([[1.5]]), np.array([[-2.0]])
        x = np.array([[[0.3], [1.1]]])
        y, tape = ssm_scan(a, b, c, x, return_tape=True)
        da, db, dc, dx = ssm_scan_backward(tape, np.array([[[0.0], [1.0]]]))
        self.assertAlmostEqual(float(da[0, 0]), -2.0 * 1.5 * 0.3, places=12)
        self.assertAlmostEqual(float(db[0, 0]), -2.0 * (0.7 * 0.3 + 1.1), places=12)
        self.assertAlmostEqual(float(dc[0, 0]), 1.5 * (0.7 * 0.3 + 1.1), places=12)
        np.testing.assert_allclose(dx[0, :, 0], [-2.0 * 0.7 * 1.5, -2.0 * 1.5])

    def test_zero_upstream_gradient(self):
        a, b, c, x = self.random_scan_inputs()
        y, tape = ssm_scan(a, b, c, x, return_tape=True)
        for grad in ssm_scan_backward(tape, np.zeros_like(y)):
            self.assertFalse(np.any(grad))

    def test_shape_checks(self):
        a, b, c, x = self.random_scan_inputs()
        with self.assertRaises(ContractError):
            ssm_scan(a, b, c, x[0])
        with self.assertRaises(ContractError):
            ssm_scan(a[:2], b, c, x)


class SelectiveScanTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(2)
        self.params = init_ssm_params(self.rng, 4, 3)

    def test_shape_is_preserved(self):
        u = self.rng.standard_normal((2, 10, 4))
        self.assertEqual(selective_ssm_forward(self.params, u).shape, u.shape)

    def test_zero_projections_read_out_nothing(self):
        self.params.w_b[:] = 0.0
        self.params.w_c[:] = 0.0
        u = self.rng.standard_normal((2, 9, 4))
        np.testing.assert_array_equal(selective_ssm_forward(self.params, u), 0.0)

    def test_constant_input_matches_the_fixed_scan(self):
        params = init_ssm_params(self.rng, 2, 1)
        token = np.array([0.7, -0.4])
        u = np.broadcast_to(token, (1, 6, 2)).copy()
        b = token @ params.w_b
        c = token @ params.w_c
        delta = softplus(token @ params.w_delta + params.bias_delta)
        a_bar, b_bar = discretize(params, delta, b=b)
        expected = ssm_scan(a_bar, b_bar, np.broadcast_to(c, a_bar.shape), u)
        np.testing.assert_allclose(selective_ssm_forward(params, u), expected, rtol=1e-12, atol=1e-15)

    def test_single_token(self):
        u = self.rng.standard_normal((1, 1, 4))
        token = u[0, 0]
        b = token @ self.params.w_b
        c = token @ self.params.w_c
        delta = softplus(token @ self.params.w_delta + self.params.bias_delta)
        expected = delta * token * (b * c).sum()
        np.testing.assert_allclose(selective_ssm_forward(self.params, u)[0, 0], expected, rtol=1e-12, atol=1e-14)

    def test_chunked_scan_matches_the_taped_scan(self):
        u = self.rng.standard_normal((1, 23, 4))
        taped, _ = selective_ssm_forward(self.params, u, return_tape=True)
        with mock.patch('voxseq.ssm.SCAN_CHUNK', 5):
            chunked = selective_ssm_forward(self.params, u)
        np.testing.assert_allclose(chunked, taped, rtol=1e-12, atol=1e-14)

    def test_causal(self):
        u = self.rng.standard_normal((1, 10, 4))
        u2 = u.copy()
        u2[:, 6] -= 3.0
        np.testing.assert_array_equal(selective_ssm_forward(self.params, u2)[:, :6],
                                      selective_ssm_forward(self.params, u)[:, :6])

    def test_backward_returns_gradients_for_every_projection(self):
        u = self.rng.standard_normal((1, 8, 4))
        y, tape = selective_ssm_forward(self.params, u, return_tape=True)
        du, grads = selective_ssm_backward(tape, np.ones_like(y))
        self.assertEqual(du.shape, u.shape)
        for name in ('a_log', 'w_b', 'w_c', 'w_delta', 'bias_delta'):
            self.assertEqual(np.shape(getattr(grads, name)), np.shape(getattr(self.params, name)))

    def test_needs_selective_parameters(self):
        fixed = init_ssm_params(self.rng, 4, 3, selective=False)
        with self.assertRaises(ContractError):
            selective_ssm_forward(fixed, np.zeros((1, 3, 4)))

    def test_non_finite_input(self):
        u = np.zeros((1, 3, 4))
        u[0, 1, 2] = np.nan
        with self.assertRaises(NumericError):
            selective_ssm_forward(self.params, u)
