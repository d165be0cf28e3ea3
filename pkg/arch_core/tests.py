import itertools
import os
import tempfile

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from .config import ArchConfig, FpgaSpec, ifm_buffer_words, validate_arch
from .errors import ShapeError
from .layers import (INPUT, LayerDescriptor, ModelDescriptor, flop_count,
                     infer_shapes, layer_flops, validate_model)
from .tensor import Tensor
from . import zoo


ARRIA10 = dict(name='arria10', dsp_count=1518, burst_width_bits=512,
               mem_bandwidth_bytes_per_sec=19.2e9, f_clk_hz=200e6)


def single_layer_model(layer, input_shape):
    return ModelDescriptor('single', input_shape, [layer])


class ArchConfigTests(SimpleTestCase):
    def test_valid_configs(self):
        for cfg in (ArchConfig(16, 16, 4), ArchConfig(16, 32, 6),
                    ArchConfig(1, 1, 1)):
            self.assertIs(validate_arch(cfg), cfg)

    def test_zero_pe_num(self):
        with self.assertRaises(ValidationError) as cm:
            validate_arch(ArchConfig(0, 16, 1))
        self.assertEqual(list(cm.exception.message_dict), ['pe_num'])

    def test_every_violation_is_reported(self):
        with self.assertRaises(ValidationError) as cm:
            validate_arch(ArchConfig(0, -1, 2.5))
        self.assertEqual(set(cm.exception.message_dict),
                         {'pe_num', 'vec_fac', 'reuse_fac'})

    def test_total_parallelism(self):
        for pe, vec, reuse in itertools.product([1, 2, 3, 16], repeat=3):
            cfg = ArchConfig(pe, vec, reuse)
            self.assertEqual(cfg.total_parallelism(), pe * vec * reuse)

    def test_ifm_buffer_words(self):
        self.assertEqual(ifm_buffer_words(ArchConfig(16, 16, 4)), 64)
        self.assertEqual(ifm_buffer_words(ArchConfig(1, 1, 1)), 1)
        self.assertEqual(ifm_buffer_words(ArchConfig(16, 32, 6)), 192)


class FpgaSpecTests(SimpleTestCase):
    def test_bytes_per_cycle(self):
        self.assertAlmostEqual(FpgaSpec(**ARRIA10).bytes_per_cycle(), 96.0)

    def test_burst_width_must_be_multiple_of_data_width(self):
        with self.assertRaises(ValidationError) as cm:
            FpgaSpec(**{**ARRIA10, 'burst_width_bits': 500})
        self.assertIn('burst_width_bits', cm.exception.message_dict)

    def test_non_positive_bandwidth(self):
        with self.assertRaises(ValidationError):
            FpgaSpec(**{**ARRIA10, 'mem_bandwidth_bytes_per_sec': 0})

    def test_from_dict_reports_missing_fields(self):
        with self.assertRaises(ValidationError) as cm:
            FpgaSpec.from_dict({'name': 'x', 'dsp_count': 10})
        self.assertEqual(set(cm.exception.message_dict),
                         {'burst_width_bits', 'mem_bandwidth_bytes_per_sec',
                          'f_clk_hz'})

    def test_from_dict_converts_profile(self):
        spec = FpgaSpec.from_dict({**ARRIA10, 'comment': 'ignored',
                                   'pe_num_profile': [[2, 0.5], [4, 0.25]]})
        self.assertEqual(spec.pe_num_profile, ((2, 0.5), (4, 0.25)))


class ShapeInferenceTests(SimpleTestCase):
    def test_alexnet_conv1(self):
        conv = LayerDescriptor.conv('conv1', [INPUT], 96, 3, 11, stride=4)
        shapes = infer_shapes(single_layer_model(conv, (3, 227, 227)))
        self.assertEqual(shapes['conv1'], (96, 55, 55))

    def test_relu_preserves_shape(self):
        relu = LayerDescriptor.relu('relu', [INPUT])
        shapes = infer_shapes(single_layer_model(relu, (512, 7, 7)))
        self.assertEqual(shapes['relu'], (512, 7, 7))

    def test_full_window_conv(self):
        conv = LayerDescriptor.conv('conv', [INPUT], 1, 1, 5)
        shapes = infer_shapes(single_layer_model(conv, (1, 5, 5)))
        self.assertEqual(shapes['conv'], (1, 1, 1))

    def test_channel_mismatch_names_layer(self):
        conv = LayerDescriptor.conv('conv_bad', [INPUT], 4, 2, 3)
        with self.assertRaisesMessage(ShapeError, "layer 'conv_bad'"):
            infer_shapes(single_layer_model(conv, (3, 8, 8)))

    def test_eltwise_shape_mismatch(self):
        model = ModelDescriptor('m', (2, 8, 8), [
            LayerDescriptor.maxpool('pool', [INPUT], 2),
            LayerDescriptor.eltwise('add', [INPUT, 'pool']),
        ])
        with self.assertRaisesMessage(ShapeError, "layer 'add'"):
            infer_shapes(model)

    def test_idempotent(self):
        model = zoo.resnet_toy()
        self.assertEqual(infer_shapes(model), infer_shapes(model))

    def test_bundled_output_shapes(self):
        self.assertEqual(infer_shapes(zoo.alexnet())['fc8'], (1000, 1, 1))
        self.assertEqual(infer_shapes(zoo.resnet(50))['pool5'],
                         (2048, 1, 1))
        self.assertEqual(infer_shapes(zoo.resnet_toy())['fc10'], (10, 1, 1))
        self.assertEqual(infer_shapes(zoo.alexnet_toy())['fc7'], (10, 1, 1))


class ModelValidationTests(SimpleTestCase):
    def test_bundled_models_are_valid(self):
        for build in zoo.BUNDLED.values():
            model = build()
            self.assertIs(validate_model(model), model)

    def test_unresolved_input(self):
        model = ModelDescriptor('m', (1, 4, 4), [
            LayerDescriptor.relu('relu', ['missing'])])
        with self.assertRaises(ValidationError) as cm:
            validate_model(model)
        self.assertIn('relu.inputs', cm.exception.message_dict)

    def test_eltwise_needs_two_inputs(self):
        model = ModelDescriptor('m', (1, 4, 4), [
            LayerDescriptor.eltwise('add', [INPUT])])
        with self.assertRaises(ValidationError) as cm:
            validate_model(model)
        self.assertIn('add.inputs', cm.exception.message_dict)

    def test_even_lrn_window(self):
        model = ModelDescriptor('m', (4, 4, 4), [
            LayerDescriptor.lrn('norm', [INPUT], local_size=4)])
        with self.assertRaises(ValidationError) as cm:
            validate_model(model)
        self.assertIn('norm.local_size', cm.exception.message_dict)

    def test_non_numeric_parameters(self):
        model = ModelDescriptor('m', (4, 4, 4), [
            LayerDescriptor.lrn('norm', [INPUT], alpha='x', k=None),
            LayerDescriptor.maxpool('pool', ['norm'], 2, padding='1')])
        with self.assertRaises(ValidationError) as cm:
            validate_model(model)
        self.assertEqual(set(cm.exception.message_dict),
                         {'norm.alpha', 'norm.k', 'pool.padding'})

    def test_duplicate_name(self):
        model = ModelDescriptor('m', (1, 4, 4), [
            LayerDescriptor.relu('relu', [INPUT]),
            LayerDescriptor.relu('relu', ['relu'])])
        with self.assertRaises(ValidationError) as cm:
            validate_model(model)
        self.assertIn('relu.name', cm.exception.message_dict)


class FlopCountTests(SimpleTestCase):
    def assertGflopsNear(self, model, expected):
        gflops = flop_count(model) / 1e9
        self.assertGreaterEqual(gflops, expected * 0.85)
        self.assertLessEqual(gflops, expected * 1.15)

    def test_alexnet(self):
        self.assertGflopsNear(zoo.alexnet(), 1.4)

    def test_resnet50(self):
        self.assertGflopsNear(zoo.resnet(50), 8)

    def test_resnet152(self):
        self.assertGflopsNear(zoo.resnet(152), 22)

    def test_single_mac(self):
        conv = LayerDescriptor.conv('conv', [INPUT], 1, 1, 1)
        self.assertEqual(flop_count(single_layer_model(conv, (1, 1, 1))), 2)

    def test_additive_over_layers(self):
        model = zoo.alexnet()
        self.assertEqual(sum(layer_flops(model).values()), flop_count(model))

    def test_invariant_under_reordering(self):
        model = zoo.resnet_toy()
        names = model.layer_names()
        layers = list(model.layers)
        # the projection shortcut only depends on pool1
        shortcut = layers.pop(names.index('res2a_branch1'))
        layers.insert(names.index('res2a_branch2a'), shortcut)
        reordered = model.replace_layers(layers)
        self.assertNotEqual(reordered.layer_names(), names)
        self.assertIs(validate_model(reordered), reordered)
        self.assertEqual(flop_count(reordered), flop_count(model))


class TensorTests(SimpleTestCase):
    def test_from_flat_checks_length(self):
        with self.assertRaises(ShapeError):
            Tensor.from_flat((2, 2, 2), range(7))

    def test_data_is_read_only(self):
        tensor = Tensor.from_flat((1, 2, 2), [1, 2, 3, 4])
        with self.assertRaises(ValueError):
            tensor.data[0, 0, 0] = 5

    def test_from_file_rejects_nan(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'ifm.bin')
            np.array([1.0, np.nan, 0.0, 2.0], dtype='<f4').tofile(path)
            with self.assertRaises(ValueError):
                Tensor.from_file(path, (1, 2, 2))

    def test_file_round_trip(self):
        tensor = Tensor.from_flat((2, 1, 3), np.arange(6) / 7)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'ifm.bin')
            tensor.to_file(path)
            loaded = Tensor.from_file(path, (2, 1, 3))
        np.testing.assert_array_equal(loaded.data, tensor.data)
        self.assertEqual(loaded.checksum(), tensor.checksum())
