"""Tests for the NCHW tensor type and its kernels."""

import numpy as np
import pytest

from efdn import tensor as T
from efdn.errors import ConfigError, DimensionError
from oracles import conv2d_loops


class TestTensorType:
    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            T.Tensor(np.zeros((3, 4, 5)))

    def test_rejects_zero_dim(self):
        with pytest.raises(DimensionError):
            T.Tensor(np.zeros((1, 0, 4, 4)))

    def test_casts_to_float32(self):
        t = T.Tensor(np.ones((1, 1, 2, 2), dtype=np.float64))
        assert t.data.dtype == np.float32

    def test_dims(self):
        t = T.Tensor.zeros(2, 3, 4, 5)
        assert t.dims == (2, 3, 4, 5)
        assert (t.n, t.c, t.h, t.w) == (2, 3, 4, 5)


class TestConvParams:
    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            T.ConvParams(np.zeros((1, 1, 2, 2)), np.zeros(1))

    def test_bias_shape_checked(self):
        with pytest.raises(DimensionError):
            T.ConvParams(np.zeros((2, 1, 3, 3)), np.zeros(3))

    def test_same_padding(self):
        p = T.ConvParams.same(np.zeros((1, 1, 3, 3)), np.zeros(1))
        assert p.padding == (1, 1)
        p1 = T.ConvParams.same(np.zeros((1, 1, 1, 1)), np.zeros(1))
        assert p1.padding == (0, 0)

    def test_negative_padding_rejected(self):
        with pytest.raises(ConfigError):
            T.ConvParams(np.zeros((1, 1, 3, 3)), np.zeros(1), (-1, 0))


class TestConv2d:
    def test_identity_1x1(self):
        rng = np.random.default_rng(0)
        x = T.Tensor(rng.random((2, 3, 5, 5)))
        eye = np.eye(3, dtype=np.float32).reshape(3, 3, 1, 1)
        p = T.ConvParams(eye, np.zeros(3, np.float32))
        y = T.conv2d(x, p)
        np.testing.assert_array_equal(y.data, x.data)

    def test_box_mean_preserves_constants(self):
        x = T.Tensor.full(1, 1, 6, 6, 0.7)
        w = np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32)
        p = T.ConvParams(w, np.zeros(1, np.float32), (0, 0))
        y = T.conv2d(x, p)
        assert y.dims == (1, 1, 4, 4)
        np.testing.assert_allclose(y.data, 0.7, atol=1e-6)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.random((1, 2, 5, 5)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        expected = conv2d_loops(x, w, b, 1, 1)
        got = T.conv2d(T.Tensor(x), T.ConvParams(w, b, (1, 1)))
        np.testing.assert_allclose(got.data, expected, atol=1e-6)

    @pytest.mark.parametrize("pad", [(0, 0), (1, 1), (2, 1)])
    def test_matches_loop_oracle_paddings(self, pad):
        rng = np.random.default_rng(2)
        x = rng.random((2, 3, 6, 7)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        expected = conv2d_loops(x, w, b, *pad)
        got = T.conv2d(T.Tensor(x), T.ConvParams(w, b, pad))
        np.testing.assert_allclose(got.data, expected, atol=1e-5)

    def test_reference_path_agrees(self):
        rng = np.random.default_rng(3)
        x = T.Tensor(rng.random((2, 4, 8, 8)))
        w = rng.standard_normal((5, 4, 3, 3)).astype(np.float32)
        b = rng.standard_normal(5).astype(np.float32)
        p = T.ConvParams(w, b, (1, 1))
        fast = T.conv2d(x, p)
        ref = T.conv2d_reference(x, p)
        np.testing.assert_allclose(fast.data, ref.data, atol=1e-5)

    def test_channel_mismatch(self):
        x = T.Tensor.zeros(1, 2, 4, 4)
        p = T.ConvParams(np.zeros((1, 3, 3, 3), np.float32), np.zeros(1, np.float32))
        with pytest.raises(DimensionError):
            T.conv2d(x, p)

    def test_output_shape_law(self):
        x = T.Tensor.zeros(1, 1, 8, 10)
        p = T.ConvParams(np.zeros((2, 1, 3, 3), np.float32), np.zeros(2, np.float32), (1, 1))
        assert T.conv2d(x, p).dims == (1, 2, 8, 10)
        p0 = T.ConvParams(np.zeros((2, 1, 3, 3), np.float32), np.zeros(2, np.float32), (0, 0))
        assert T.conv2d(x, p0).dims == (1, 2, 6, 8)

    def test_kernel_larger_than_padded_input(self):
        x = T.Tensor.zeros(1, 1, 1, 1)
        p = T.ConvParams(np.zeros((1, 1, 3, 3), np.float32), np.zeros(1, np.float32), (0, 0))
        with pytest.raises(DimensionError):
            T.conv2d(x, p)

    def test_linearity_with_zero_bias(self):
        rng = np.random.default_rng(4)
        x = rng.random((1, 2, 6, 6)).astype(np.float32)
        y = rng.random((1, 2, 6, 6)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        p = T.ConvParams(w, np.zeros(3, np.float32), (1, 1))
        a, b = 0.7, -1.3
        lhs = T.conv2d(T.Tensor(a * x + b * y), p).data
        rhs = a * T.conv2d(T.Tensor(x), p).data + b * T.conv2d(T.Tensor(y), p).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)


class TestPixelShuffle:
    def test_shape_law(self):
        x = T.Tensor.zeros(1, 4, 2, 2)
        assert T.pixel_shuffle(x, 2).dims == (1, 1, 4, 4)

    def test_r1_identity(self):
        rng = np.random.default_rng(5)
        x = T.Tensor(rng.random((2, 3, 4, 4)))
        np.testing.assert_array_equal(T.pixel_shuffle(x, 1).data, x.data)

    def test_hand_enumerated_index_map(self):
        # channel k of a 1x1 image lands at (dy, dx) = (k // r, k % r)
        x = np.array([1.0, 2.0, 3.0, 4.0], np.float32).reshape(1, 4, 1, 1)
        y = T.pixel_shuffle(T.Tensor(x), 2)
        np.testing.assert_array_equal(y.data[0, 0], [[1.0, 2.0], [3.0, 4.0]])

    def test_spec_index_formula(self):
        rng = np.random.default_rng(6)
        r = 2
        x = rng.random((2, 8, 3, 3)).astype(np.float32)
        y = T.pixel_shuffle(T.Tensor(x), r).data
        for n in range(2):
            for c in range(2):
                for yy in range(3):
                    for xx in range(3):
                        for dy in range(r):
                            for dx in range(r):
                                assert y[n, c, yy * r + dy, xx * r + dx] == x[n, c * r * r + dy * r + dx, yy, xx]

    def test_bijection_on_elements(self):
        rng = np.random.default_rng(7)
        x = rng.random((2, 9, 4, 5)).astype(np.float32)
        y = T.pixel_shuffle(T.Tensor(x), 3).data
        np.testing.assert_array_equal(np.sort(x.ravel()), np.sort(y.ravel()))

    def test_indivisible_channels(self):
        with pytest.raises(DimensionError):
            T.pixel_shuffle(T.Tensor.zeros(1, 3, 2, 2), 2)


class TestElementwise:
    def test_add_zeros(self):
        rng = np.random.default_rng(8)
        x = T.Tensor(rng.random((1, 2, 3, 3)))
        z = T.Tensor.zeros(1, 2, 3, 3)
        np.testing.assert_array_equal(T.add(x, z).data, x.data)

    def test_add_dim_mismatch(self):
        with pytest.raises(DimensionError):
            T.add(T.Tensor.zeros(1, 1, 2, 2), T.Tensor.zeros(1, 2, 2, 2))

    def test_concat_slice_partition(self):
        rng = np.random.default_rng(9)
        x = T.Tensor(rng.random((2, 5, 3, 4)))
        parts = [T.slice_channels(x, 0, 2), T.slice_channels(x, 2, 5)]
        np.testing.assert_array_equal(T.concat_channels(parts).data, x.data)

    def test_concat_requires_matching_spatial(self):
        with pytest.raises(DimensionError):
            T.concat_channels([T.Tensor.zeros(1, 1, 2, 2), T.Tensor.zeros(1, 1, 3, 2)])

    def test_slice_out_of_range(self):
        with pytest.raises(DimensionError):
            T.slice_channels(T.Tensor.zeros(1, 2, 2, 2), 0, 3)

    def test_leaky_relu_value(self):
        x = T.Tensor(np.array([-2.0, 0.0, 3.0, -0.5], np.float32).reshape(1, 1, 1, 4))
        y = T.leaky_relu(x, 0.05)
        np.testing.assert_allclose(y.data.ravel(), [-0.1, 0.0, 3.0, -0.025], atol=1e-7)


class TestDeterminism:
    def test_conv_bit_identical_across_runs(self):
        rng = np.random.default_rng(10)
        x = T.Tensor(rng.random((2, 8, 16, 16)))
        w = rng.standard_normal((8, 8, 3, 3)).astype(np.float32)
        p = T.ConvParams(w, np.zeros(8, np.float32), (1, 1))
        a = T.conv2d(x, p).data
        b = T.conv2d(x, p).data
        np.testing.assert_array_equal(a, b)
