import numpy as np
from django.test import SimpleTestCase

from voxseq.exceptions import ContractError
from voxseq.grid import FeatureGrid, GridDims
from voxseq.hierarchy import (
    HierarchyConfig, decoder_forward, downsample, encoder_forward, hierarchy_forward, init_hierarchy,
    level_dims, mamba_group, pool_factors, upsample,
)
from voxseq.mamba import init_mamba_block, mamba_block_forward
from voxseq.ordering import OrderingScheme, Scheme, apply_ordering, build_ordering, invert_ordering


def small_config(**kwargs):
    options = dict(groups=3, blocks_per_group=1, base_width=4, state_dim=2, conv_width=2)
    options.update(kwargs)
    return HierarchyConfig(**options)


class MambaGroupTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(8)

    def test_zero_blocks_act_as_identity(self):
        grid = FeatureGrid(self.rng.standard_normal((4, 8, 8, 4)))
        blocks = [init_mamba_block(self.rng, 4, state_dim=2) for _ in range(2)]
        for block in blocks:
            block.out_proj[:] = 0.0
        ordering = build_ordering(Scheme.HP_HILBERT2D, grid.dims)
        np.testing.assert_array_equal(mamba_group(grid, blocks, ordering).values, grid.values)

    def test_matches_manual_composition(self):
        grid = FeatureGrid(self.rng.standard_normal((2, 2, 2, 4)))
        blocks = [init_mamba_block(self.rng, 4, state_dim=2) for _ in range(2)]
        ordering = build_ordering(Scheme.HILBERT3D, grid.dims)
        seq = apply_ordering(grid, ordering)
        for block in blocks:
            seq = mamba_block_forward(block, seq)
        expected = invert_ordering(seq, ordering)
        np.testing.assert_array_equal(mamba_group(grid, blocks, ordering).values, expected.values)

    def test_output_dims_equal_input_dims(self):
        grid = FeatureGrid(self.rng.standard_normal((4, 8, 8, 16)))
        blocks = [init_mamba_block(self.rng, 16, state_dim=4)]
        out = mamba_group(grid, blocks, build_ordering(Scheme.HP_MORTON2D, grid.dims))
        self.assertEqual(out.dims, grid.dims)


class ResamplingTests(SimpleTestCase):
    def test_block_average(self):
        grid = FeatureGrid(np.arange(8, dtype=np.float64).reshape(2, 2, 2, 1))
        out = downsample(grid)
        self.assertEqual(out.dims, GridDims(1, 1, 1, 1))
        self.assertEqual(out.values.item(), 3.5)

    def test_constant_grid_stays_constant(self):
        grid = FeatureGrid(np.full((4, 6, 8, 3), 2.5))
        out = downsample(grid)
        self.assertEqual(out.dims, GridDims(4, 3, 2, 3))
        np.testing.assert_allclose(out.values, 2.5)

    def test_repeated_halving(self):
        grid = FeatureGrid(np.zeros((8, 16, 16, 1)))
        for _ in range(3):
            grid = downsample(grid)
        self.assertEqual(grid.dims.spatial(), GridDims(2, 2, 1))

    def test_odd_and_unit_axes_are_not_pooled(self):
        self.assertEqual(pool_factors(GridDims(5, 4, 1)), (1, 2, 1))
        out = downsample(FeatureGrid(np.ones((1, 4, 5, 2))))
        self.assertEqual(out.dims, GridDims(5, 2, 1, 2))

    def test_channel_map(self):
        grid = FeatureGrid(np.ones((2, 2, 2, 3)))
        out = downsample(grid, np.ones((3, 5)))
        self.assertEqual(out.dims, GridDims(1, 1, 1, 5))
        np.testing.assert_allclose(out.values, 3.0)

    def test_upsample_adds_the_skip(self):
        coarse = FeatureGrid(np.array([[[[1.0]]]]))
        skip = FeatureGrid(np.arange(8, dtype=np.float64).reshape(2, 2, 2, 1))
        out = upsample(coarse, skip, (2, 2, 2))
        np.testing.assert_array_equal(out.values, skip.values + 1.0)

    def test_upsample_skip_mismatch(self):
        coarse = FeatureGrid(np.zeros((1, 1, 1, 2)))
        with self.assertRaises(ContractError):
            upsample(coarse, FeatureGrid(np.zeros((2, 2, 2, 3))), (2, 2, 2))
        with self.assertRaises(ContractError):
            upsample(coarse, FeatureGrid(np.zeros((2, 2, 4, 2))), (2, 2, 2))


class EncoderDecoderTests(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(9)

    def test_latent_and_skip_dims(self):
        config = HierarchyConfig(groups=4, blocks_per_group=1, base_width=32, state_dim=2)
        self.assertEqual(config.widths, (32, 64, 128, 128))
        params = init_hierarchy(self.rng, config)
        grid = FeatureGrid(self.rng.standard_normal((8, 16, 16, 32)))
        latent, state = encoder_forward(config, params, grid)
        self.assertEqual(latent.dims, GridDims(2, 2, 1, 128))
        self.assertEqual([skip.dims for skip in state.skips],
                         [GridDims(16, 16, 8, 32), GridDims(8, 8, 4, 64), GridDims(4, 4, 2, 128)])
        out = decoder_forward(config, params, latent, state)
        self.assertEqual(out.dims, grid.dims)

    def test_single_group_is_one_mamba_group(self):
        config = small_config(groups=1)
        params = init_hierarchy(self.rng, config)
        grid = FeatureGrid(self.rng.standard_normal((3, 4, 5, 4)))
        ordering = build_ordering(config.scheme, grid.dims)
        expected = mamba_group(grid, params.encoder[0], ordering)
        np.testing.assert_array_equal(hierarchy_forward(config, params, grid).values, expected.values)

    def test_odd_sizes_round_trip(self):
        config = small_config()
        params = init_hierarchy(self.rng, config)
        grid = FeatureGrid(self.rng.standard_normal((7, 3, 5, 4)))
        self.assertEqual(hierarchy_forward(config, params, grid).dims, grid.dims)

    def test_deterministic(self):
        config = small_config(scheme=OrderingScheme(Scheme.HP_HILBERT2D, True))
        params = init_hierarchy(self.rng, config)
        grid = FeatureGrid(self.rng.standard_normal((4, 8, 8, 4)))
        np.testing.assert_array_equal(hierarchy_forward(config, params, grid).values,
                                      hierarchy_forward(config, params, grid).values)

    def test_random_shapes_keep_their_dims(self):
        config = small_config(base_width=2)
        params = init_hierarchy(self.rng, config)
        for _ in range(50):
            w, h, d = (int(v) for v in self.rng.integers(1, 10, size=3))
            grid = FeatureGrid(self.rng.standard_normal((d, h, w, 2)))
            self.assertEqual(hierarchy_forward(config, params, grid).dims, grid.dims)

    def test_level_dims(self):
        config = small_config(groups=4)
        self.assertEqual(level_dims(config, GridDims(16, 16, 8)),
                         [GridDims(16, 16, 8), GridDims(8, 8, 4), GridDims(4, 4, 2), GridDims(2, 2, 1)])

    def test_input_width_must_match(self):
        config = small_config()
        params = init_hierarchy(self.rng, config)
        with self.assertRaises(ContractError):
            encoder_forward(config, params, FeatureGrid(np.zeros((2, 2, 2, 3))))

    def test_invalid_config(self):
        with self.assertRaises(ContractError):
            HierarchyConfig(groups=0)
        with self.assertRaises(ContractError):
            HierarchyConfig(groups=2, base_width=4, widths=(4,))
