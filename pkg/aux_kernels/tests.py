import numpy as np
from django.test import SimpleTestCase

from arch_core import zoo
from arch_core.config import ArchConfig
from arch_core.errors import ShapeError
from arch_core.layers import INPUT, LayerDescriptor, infer_shapes, input_shapes
from memrd.schedule import conv_geometry, load_event_count
from oracle_ops.reference import eltwise_relu_ref, lrn_ref, maxpool_ref

from .kernels import (aux_cycles, simulate_lrn, simulate_memwrite,
                      simulate_pool)


AUX_KINDS = ('maxpool', 'lrn', 'eltwise', 'relu')


def conv_cycles(layer, cfg, ifm_shape):
    g = conv_geometry(layer, cfg, ifm_shape)
    compute = g.ofm_groups * g.tiles * g.channel_groups * g.c * g.c
    return max(compute, load_event_count(layer, cfg, ifm_shape))


def feeding_conv(model, layer):
    """Follow the main input of layer back to the conv that produces it."""
    while layer.kind != 'conv':
        layer = model.layer(layer.inputs[-1])
    return layer


class SimulatePoolTests(SimpleTestCase):
    def test_single_window(self):
        layer = LayerDescriptor.maxpool('pool', [INPUT], 2)
        out, stats = simulate_pool(np.array([[[1, 2], [3, 4]]]), layer)
        np.testing.assert_array_equal(out.data, [[[4]]])
        self.assertEqual(stats.cycles, 1)

    def test_equals_oracle_bit_exactly(self):
        x = np.random.default_rng(0).standard_normal((3, 9, 9))
        x = x.astype(np.float32)
        layer = LayerDescriptor.maxpool('pool', [INPUT], 3, stride=2,
                                        padding=1)
        out, _ = simulate_pool(x, layer)
        np.testing.assert_array_equal(out.data,
                                      maxpool_ref(x, 3, 2, 1).data)

    def test_cycles_per_output(self):
        layer = LayerDescriptor.maxpool('pool', [INPUT], 2, stride=2)
        out, stats = simulate_pool(np.zeros((1, 8, 8)), layer)
        self.assertEqual(out.shape, (1, 4, 4))
        self.assertEqual(stats, (16, 256, 64))

    def test_lanes(self):
        layer = LayerDescriptor.maxpool('pool', [INPUT], 2, stride=2)
        _, stats = simulate_pool(np.zeros((20, 8, 8)), layer, lanes=16)
        self.assertEqual(stats.cycles, 2 * 16)

    def test_window_too_large(self):
        layer = LayerDescriptor.maxpool('pool', [INPUT], 5)
        with self.assertRaises(ShapeError):
            simulate_pool(np.zeros((1, 4, 4)), layer)


class SimulateLrnTests(SimpleTestCase):
    def test_matches_oracle(self):
        x = np.random.default_rng(1).standard_normal((16, 4, 4))
        x = x.astype(np.float32)
        layer = LayerDescriptor.lrn('norm', [INPUT])
        out, stats = simulate_lrn(x, layer)
        np.testing.assert_allclose(out.data,
                                   lrn_ref(x, 5, 1e-4, 0.75, 2.0).data,
                                   rtol=1e-5)
        self.assertEqual(stats.cycles, 16 * 4 * 4)

    def test_zero_alpha(self):
        x = np.random.default_rng(2).standard_normal((4, 3, 3))
        x = x.astype(np.float32)
        layer = LayerDescriptor.lrn('norm', [INPUT], alpha=0.0, k=1.5)
        out, _ = simulate_lrn(x, layer)
        np.testing.assert_allclose(out.data, x / 1.5 ** 0.75, rtol=1e-6)

    def test_spatially_constant_input(self):
        x = np.broadcast_to(np.arange(1, 7, dtype=np.float32)[:, None, None],
                            (6, 3, 3))
        out, _ = simulate_lrn(x, LayerDescriptor.lrn('norm', [INPUT]))
        for plane in out.data:
            np.testing.assert_array_equal(plane, plane[0, 0])

    def test_non_positive_denominator(self):
        layer = LayerDescriptor.lrn('norm', [INPUT], k=0.0)
        with self.assertRaises(ValueError):
            simulate_lrn(np.zeros((3, 2, 2)), layer)


class SimulateMemwriteTests(SimpleTestCase):
    def test_relu_only(self):
        out, stats = simulate_memwrite(-np.ones((2, 2, 2)), apply_relu=True)
        np.testing.assert_array_equal(out.data, np.zeros((2, 2, 2)))
        self.assertEqual(stats, (8, 32, 32))

    def test_cancelling_residual(self):
        a = np.random.default_rng(3).standard_normal((2, 3, 3))
        a = a.astype(np.float32)
        out, stats = simulate_memwrite(a, -a)
        np.testing.assert_array_equal(out.data, np.zeros_like(a))
        self.assertEqual(stats.bytes_in, 2 * a.size * 4)

    def test_matches_oracle(self):
        rng = np.random.default_rng(4)
        a, b = rng.standard_normal((2, 4, 5, 5)).astype(np.float32)
        out, _ = simulate_memwrite(a, b, apply_relu=True)
        np.testing.assert_array_equal(out.data,
                                      eltwise_relu_ref(a, b, True).data)

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            simulate_memwrite(np.zeros((1, 2, 2)), np.zeros((2, 2, 2)))


class BottleneckTests(SimpleTestCase):
    """Auxiliary kernels never take longer than the conv feeding them."""

    def check(self, model, cfg):
        shapes = infer_shapes(model)
        ifm_shapes = input_shapes(model)
        for layer in model.layers:
            if layer.kind not in AUX_KINDS:
                continue
            conv = feeding_conv(model, layer)
            with self.subTest(model=model.name, layer=layer.name, cfg=cfg):
                self.assertLessEqual(
                    aux_cycles(shapes[layer.name], cfg.vec_fac),
                    conv_cycles(conv, cfg, ifm_shapes[conv.name]))

    def test_bundled_models_at_evaluated_configs(self):
        for cfg in (ArchConfig(16, 16, 4), ArchConfig(16, 32, 6)):
            for build in (zoo.alexnet, lambda: zoo.resnet(50),
                          lambda: zoo.resnet(152)):
                self.check(build(), cfg)
