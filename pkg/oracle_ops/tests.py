import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from arch_core import zoo
from arch_core.errors import MissingWeightsError, ShapeError
from arch_core.layers import (INPUT, LayerDescriptor, ModelDescriptor,
                              infer_shapes)
from arch_core.tensor import Tensor
from arch_core.testing import random_weights

from .reference import (conv_ref, eltwise_relu_ref, fc_ref, lrn_ref,
                        maxpool_ref, model_ref_forward, relu_ref)


def brute_force_conv(x, w, b, stride, padding):
    op_dim, ic_dim, c, _ = w.shape
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out_h = (padded.shape[1] - c) // stride + 1
    out_w = (padded.shape[2] - c) // stride + 1
    out = np.zeros((op_dim, out_h, out_w))
    for f in range(op_dim):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0.0
                for ch in range(ic_dim):
                    for ky in range(c):
                        for kx in range(c):
                            y, x = oy * stride + ky, ox * stride + kx
                            acc += w[f, ch, ky, kx] * padded[ch, y, x]
                out[f, oy, ox] = acc + b[f]
    return out


def model_weights(rng, model):
    return {layer.name: random_weights(rng, layer)
            for layer in model.parameterized_layers()}


class ConvRefTests(SimpleTestCase):
    def test_unit_kernel_is_identity(self):
        x = np.arange(12, dtype=float).reshape(3, 2, 2)
        layer = LayerDescriptor.conv('conv', [INPUT], 1, 1, 1)
        out = conv_ref(x[:1], np.ones((1, 1, 1, 1)), np.zeros(1), layer)
        np.testing.assert_array_equal(out.data, x[:1])

    def test_sum_of_ones(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 1, 1, 2)
        out = conv_ref(np.ones((1, 2, 2)), np.ones((1, 1, 2, 2)), np.zeros(1),
                       layer)
        self.assertEqual(out.shape, (1, 1, 1))
        self.assertEqual(out.data[0, 0, 0], 4.0)

    def test_matches_brute_force_exactly(self):
        rng = np.random.default_rng(7)
        x = rng.standard_normal((8, 5, 5))
        w = rng.standard_normal((3, 8, 3, 3))
        b = rng.standard_normal(3)
        for stride, padding in ((1, 0), (2, 1), (1, 1)):
            layer = LayerDescriptor.conv('conv', [INPUT], 3, 8, 3,
                                         stride=stride, padding=padding)
            np.testing.assert_array_equal(
                conv_ref(x, w, b, layer).data,
                brute_force_conv(x, w, b, stride, padding))

    def test_grouped_matches_split_convolutions(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 6, 6))
        w = rng.standard_normal((6, 2, 3, 3))
        b = rng.standard_normal(6)
        layer = LayerDescriptor.conv('conv', [INPUT], 6, 2, 3, groups=2)
        out = conv_ref(x, w, b, layer).data
        np.testing.assert_array_equal(
            out[:3], brute_force_conv(x[:2], w[:3], b[:3], 1, 0))
        np.testing.assert_array_equal(
            out[3:], brute_force_conv(x[2:], w[3:], b[3:], 1, 0))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(min_value=-8, max_value=8, allow_nan=False),
           st.integers(min_value=0, max_value=2**31 - 1))
    def test_linear_without_bias(self, alpha, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 5, 5))
        w = rng.standard_normal((2, 2, 3, 3))
        layer = LayerDescriptor.conv('conv', [INPUT], 2, 2, 3, padding=1)
        np.testing.assert_allclose(
            conv_ref(alpha * x, w, np.zeros(2), layer).data,
            alpha * conv_ref(x, w, np.zeros(2), layer).data,
            rtol=1e-12, atol=1e-10)

    def test_weight_shape_mismatch(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 2, 1, 3)
        with self.assertRaises(ShapeError):
            conv_ref(np.ones((1, 4, 4)), np.ones((2, 1, 2, 2)), np.zeros(2),
                     layer)

    def test_deterministic(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 7, 7))
        w = rng.standard_normal((5, 4, 3, 3))
        b = rng.standard_normal(5)
        layer = LayerDescriptor.conv('conv', [INPUT], 5, 4, 3, stride=2)
        self.assertEqual(conv_ref(x, w, b, layer).data.tobytes(),
                         conv_ref(x, w, b, layer).data.tobytes())


class FcRefTests(SimpleTestCase):
    def test_identity(self):
        x = np.array([1.5, -2.0, 3.25])
        np.testing.assert_array_equal(fc_ref(x, np.eye(3), np.zeros(3)), x)

    def test_two_inputs(self):
        np.testing.assert_array_equal(
            fc_ref([3.0, 4.0], [[1.0, 1.0]], [0.0]), [7.0])

    def test_matches_dot_products(self):
        rng = np.random.default_rng(5)
        w = rng.standard_normal((64, 128))
        x = rng.standard_normal(128)
        b = rng.standard_normal(64)
        expected = [b[j] + sum(w[j, i] * x[i] for i in range(128))
                    for j in range(64)]
        np.testing.assert_allclose(fc_ref(x, w, b), expected, rtol=1e-12,
                                   atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            fc_ref(np.ones(3), np.ones((2, 4)), np.zeros(2))


class MaxpoolRefTests(SimpleTestCase):
    def test_single_window(self):
        out = maxpool_ref(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2, 2)
        np.testing.assert_array_equal(out.data, [[[4.0]]])

    def test_constant_input(self):
        out = maxpool_ref(np.full((2, 6, 6), 1.25), 3, 1)
        np.testing.assert_array_equal(out.data, np.full((2, 4, 4), 1.25))

    def test_matches_brute_force(self):
        x = np.random.default_rng(2).standard_normal((4, 8, 8))
        expected = x.reshape(4, 4, 2, 4, 2).max(axis=(2, 4))
        np.testing.assert_array_equal(maxpool_ref(x, 2, 2).data, expected)

    def test_padding_never_wins(self):
        x = -np.ones((1, 3, 3))
        out = maxpool_ref(x, 3, 2, padding=1)
        np.testing.assert_array_equal(out.data, -np.ones((1, 2, 2)))

    def test_window_too_large(self):
        with self.assertRaises(ShapeError):
            maxpool_ref(np.ones((1, 2, 2)), 3, 1)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (2, 5, 5),
                  elements=st.floats(-100, 100, allow_nan=False)),
           arrays(np.float64, (2, 5, 5),
                  elements=st.floats(0, 10, allow_nan=False)))
    def test_monotone(self, x, delta):
        np.testing.assert_array_less(
            maxpool_ref(x, 2, 1).data - 1e-12,
            maxpool_ref(x + delta, 2, 1).data + 1e-12)


class LrnRefTests(SimpleTestCase):
    def test_zero_alpha(self):
        x = np.random.default_rng(1).standard_normal((3, 2, 2))
        out = lrn_ref(x, 5, 0.0, 0.75, 2.0)
        np.testing.assert_allclose(out.data, x / 2.0 ** 0.75, rtol=1e-15)

    def test_closed_form_single_channel(self):
        x = np.array([[[0.5, -2.0], [3.0, 0.0]]])
        out = lrn_ref(x, 1, 1.0, 1.0, 1.0)
        np.testing.assert_allclose(out.data, x / (1 + x * x), rtol=1e-15)

    def test_matches_brute_force_with_alexnet_defaults(self):
        x = np.random.default_rng(4).standard_normal((16, 4, 4))
        n, alpha, beta, k = 5, 1e-4, 0.75, 2.0
        expected = np.empty_like(x)
        for ch in range(16):
            lo, hi = max(0, ch - 2), min(16, ch + 3)
            scale = k + alpha / n * (x[lo:hi] ** 2).sum(axis=0)
            expected[ch] = x[ch] / scale ** beta
        np.testing.assert_allclose(lrn_ref(x, n, alpha, beta, k).data,
                                   expected, rtol=1e-12)

    def test_non_positive_denominator(self):
        with self.assertRaises(ValueError):
            lrn_ref(np.zeros((2, 2, 2)), 3, 1e-4, 0.75, 0.0)

    def test_even_window(self):
        with self.assertRaises(ValueError):
            lrn_ref(np.ones((4, 2, 2)), 4, 1e-4, 0.75, 2.0)


class EltwiseReluRefTests(SimpleTestCase):
    def test_cancelling_operands(self):
        a = np.random.default_rng(8).standard_normal((2, 3, 3))
        out = eltwise_relu_ref(a, -a, True)
        np.testing.assert_array_equal(out.data, np.zeros_like(a))

    def test_zero_addend(self):
        a = np.random.default_rng(9).standard_normal((2, 3, 3))
        np.testing.assert_array_equal(
            eltwise_relu_ref(a, np.zeros_like(a), False).data, a)

    def test_random_pair(self):
        rng = np.random.default_rng(10)
        a, b = rng.standard_normal((2, 3, 4, 4))
        np.testing.assert_array_equal(eltwise_relu_ref(a, b, True).data,
                                      np.maximum(a + b, 0))

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            eltwise_relu_ref(np.ones((1, 2, 2)), np.ones((1, 2, 3)), False)


class ModelRefForwardTests(SimpleTestCase):
    def test_relu_only_model(self):
        model = ModelDescriptor('relu', (2, 3, 3), [
            LayerDescriptor.relu('relu', [INPUT])])
        outputs = model_ref_forward(model, -np.ones((2, 3, 3)), {})
        np.testing.assert_array_equal(outputs['relu'].data,
                                      np.zeros((2, 3, 3)))

    def test_residual_block_matches_composed_ops(self):
        model = ModelDescriptor('block', (4, 5, 5), [
            LayerDescriptor.conv('a', [INPUT], 4, 4, 3, padding=1,
                                 apply_relu=True),
            LayerDescriptor.conv('b', ['a'], 4, 4, 1),
            LayerDescriptor.eltwise('add', [INPUT, 'b'], apply_relu=True),
        ])
        rng = np.random.default_rng(12)
        weights = model_weights(rng, model)
        x = rng.standard_normal((4, 5, 5))

        outputs = model_ref_forward(model, x, weights)

        a = relu_ref(conv_ref(x, *weights['a'], model.layer('a')))
        b = conv_ref(a, *weights['b'], model.layer('b'))
        expected = eltwise_relu_ref(x, b, True)
        self.assertEqual(list(outputs), ['a', 'b', 'add'])
        np.testing.assert_array_equal(outputs['add'].data, expected.data)

    def test_alexnet_shapes(self):
        model = zoo.alexnet()
        rng = np.random.default_rng(0)
        outputs = model_ref_forward(model, rng.uniform(0, 1, (3, 227, 227)),
                                    model_weights(rng, model))
        self.assertEqual(outputs['fc8'].shape, (1000, 1, 1))
        shapes = infer_shapes(model)
        for name, tensor in outputs.items():
            self.assertEqual(tensor.shape, shapes[name])

    def test_missing_weights_names_layer(self):
        model = zoo.alexnet_toy()
        with self.assertRaisesMessage(MissingWeightsError, 'conv1'):
            model_ref_forward(model, np.zeros((3, 19, 19)), {})

    def test_accepts_tensor_input(self):
        model = ModelDescriptor('relu', (1, 2, 2), [
            LayerDescriptor.relu('relu', [INPUT])])
        x = Tensor.from_flat((1, 2, 2), [-1, 2, -3, 4])
        outputs = model_ref_forward(model, x, {})
        np.testing.assert_array_equal(outputs['relu'].flat(), [0, 2, 0, 4])
