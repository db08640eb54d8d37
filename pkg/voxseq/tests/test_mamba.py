import math

import numpy as np
from django.test import SimpleTestCase

from voxseq.exceptions import ContractError
from voxseq.layers import LN_EPS
from voxseq.mamba import MambaBlockParams, init_mamba_block, mamba_block_backward, mamba_block_forward
from voxseq.ssm import SsmParams


class MambaBlockTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(4)
        self.block = init_mamba_block(self.rng, 6, state_dim=4)

    def test_shape_is_preserved(self):
        v = self.rng.standard_normal((1, 17, 6))
        self.assertEqual(mamba_block_forward(self.block, v).shape, v.shape)
        self.assertEqual(self.block.expand_dim, 12)

    def test_zero_output_projection_is_the_identity(self):
        self.block.out_proj[:] = 0.0
        v = self.rng.standard_normal((1, 9, 6))
        np.testing.assert_array_equal(mamba_block_forward(self.block, v), v)

    def test_deterministic(self):
        v = self.rng.standard_normal((1, 9, 6))
        np.testing.assert_array_equal(mamba_block_forward(self.block, v), mamba_block_forward(self.block, v))

    def test_causal(self):
        v = self.rng.standard_normal((1, 12, 6))
        v2 = v.copy()
        v2[:, 8] += 1.0
        np.testing.assert_array_equal(mamba_block_forward(self.block, v2)[:, :8],
                                      mamba_block_forward(self.block, v)[:, :8])

    def test_backward_shapes(self):
        v = self.rng.standard_normal((1, 7, 6))
        out, tape = mamba_block_forward(self.block, v, return_tape=True)
        dv, grads = mamba_block_backward(tape, np.ones_like(out))
        self.assertEqual(dv.shape, v.shape)
        self.assertEqual(grads.in_proj_main.shape, self.block.in_proj_main.shape)
        self.assertEqual(grads.conv_kernel.shape, self.block.conv_kernel.shape)
        self.assertEqual(grads.ssm.w_b.shape, self.block.ssm.w_b.shape)

    def test_channel_mismatch(self):
        with self.assertRaises(ContractError):
            mamba_block_forward(self.block, np.zeros((1, 4, 5)))
        with self.assertRaises(ContractError):
            mamba_block_forward(self.block, np.zeros((4, 6)))


def silu(x):
    return x / (1.0 + math.exp(-x))


class HandComputedBlockTests(SimpleTestCase):
    def test_single_token_two_channels(self):
        # identity projections, a one-tap unit conv, one state dim and a unit step
        eye = np.eye(2)
        block = MambaBlockParams(
            ln_gain=np.ones(2),
            ln_bias=np.zeros(2),
            in_proj_main=eye.copy(),
            in_proj_gate=eye.copy(),
            conv_kernel=np.ones((2, 1)),
            conv_bias=np.zeros(2),
            ssm=SsmParams(a_log=np.zeros((2, 1)), w_b=np.ones((2, 1)), w_c=np.ones((2, 1)),
                          w_delta=np.zeros(2), bias_delta=np.array(math.log(math.expm1(1.0)))),
            out_proj=eye.copy(),
        )
        block.validate()
        out = mamba_block_forward(block, np.array([[[1.0, 3.0]]]))

        r = 1.0 / math.sqrt(1.0 + LN_EPS)
        act = [silu(-r), silu(r)]
        readout = (act[0] + act[1]) ** 2
        # y_e = delta * act_e * B * C, gated by act_e, plus the residual
        expected = [1.0 + act[0] * readout * act[0], 3.0 + act[1] * readout * act[1]]
        np.testing.assert_allclose(out[0, 0], expected, rtol=1e-12)
