import contextlib
import csv
import io
import json
from pathlib import Path
import struct
import tempfile

import numpy as np
from django.core.exceptions import ValidationError
from django.core.management import CommandError, call_command
from django.test import SimpleTestCase, tag

from arch_core import zoo
from arch_core.config import ArchConfig
from arch_core.errors import MissingWeightsError
from arch_core.layers import INPUT, LayerDescriptor, ModelDescriptor, \
    flop_count
from arch_core.tensor import LayerWeights, Tensor
from oracle_ops.reference import model_ref_forward

from .cli import cli
from .descriptors import (DescriptorError, load_fpga, load_model,
                          model_from_dict, model_to_dict)
from .reports import to_json
from .runtime import (Mode, RunOptions, reference_mismatches, run_inference,
                      synthetic_inputs)
from .weights import (MagicMismatch, RecordNameError, RecordShapeMismatch,
                      ShortRead, WeightFormatError, encode_weights,
                      load_weights, read_records, save_weights,
                      synthetic_weights)


def tiny_fc_model():
    return ModelDescriptor('tiny', (3, 1, 1),
                           [LayerDescriptor.fc('fc', [INPUT], 2, 3)])


class TempDirMixin:
    def setUp(self):
        super().setUp()
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.tmp = Path(tmp.name)

    def write(self, name, text):
        path = self.tmp / name
        path.write_text(text, encoding='utf-8')
        return path


class ModelDescriptorTests(TempDirMixin, SimpleTestCase):
    def test_bundled_descriptors_match_the_zoo(self):
        for name, build in zoo.BUNDLED.items():
            with self.subTest(name):
                self.assertEqual(load_model(name), build())

    def test_bundled_flops(self):
        for name, gflops in [('alexnet', 1.4), ('resnet50', 8),
                             ('resnet152', 22)]:
            with self.subTest(name):
                flops = flop_count(load_model(name)) / 1e9
                self.assertLess(abs(flops - gflops), 0.15 * gflops)

    def test_load_by_path(self):
        path = self.write('m.json', json.dumps(model_to_dict(
            zoo.alexnet_toy())))
        self.assertEqual(load_model(str(path)), zoo.alexnet_toy())

    def test_dict_round_trip(self):
        model = zoo.resnet_toy()
        self.assertEqual(model_from_dict(model_to_dict(model)), model)

    def test_defaults(self):
        model = model_from_dict({'name': 'm', 'input_shape': [2, 4, 4],
                                 'layers': [{'name': 'pool',
                                             'type': 'maxpool',
                                             'window': 2}]})
        layer = model.layer('pool')
        self.assertEqual(layer.inputs, (INPUT,))
        self.assertEqual((layer.stride, layer.padding), (2, 0))
        self.assertFalse(layer.apply_relu)

    def test_truncated_file(self):
        path = self.write('m.json', '{"name": "m", "layers": [')
        with self.assertRaisesMessage(DescriptorError, 'line 1'):
            load_model(str(path))

    def test_missing_file(self):
        with self.assertRaises(FileNotFoundError):
            load_model(str(self.tmp / 'nope.json'))

    def test_field_errors(self):
        with self.assertRaises(ValidationError) as cm:
            model_from_dict({'name': 'm', 'input_shape': [1, 2, 2],
                             'layers': [{'name': 'a', 'type': 'avgpool'},
                                        {'name': 'b', 'type': 'relu',
                                         'window': 3}]})
        self.assertEqual(set(cm.exception.message_dict),
                         {'a.type', 'b.window'})

    def test_missing_fields(self):
        with self.assertRaises(ValidationError) as cm:
            model_from_dict({'name': 'm'})
        self.assertEqual(set(cm.exception.message_dict),
                         {'input_shape', 'layers'})

    def test_non_numeric_lrn_parameters(self):
        data = model_to_dict(zoo.alexnet_toy())
        norm = data['layers'][1]
        norm.update(alpha='x', beta=None, k='2')
        with self.assertRaises(ValidationError) as cm:
            model_from_dict(data)
        self.assertEqual(set(cm.exception.message_dict),
                         {'norm1.alpha', 'norm1.beta', 'norm1.k'})

    def test_bundled_name_with_extension(self):
        self.assertEqual(load_model('alexnet_toy.json'), zoo.alexnet_toy())
        self.assertEqual(load_fpga('stratix10.json'), load_fpga('stratix10'))

    def test_semantic_error_names_the_layer(self):
        data = model_to_dict(zoo.alexnet_toy())
        data['layers'][3]['kernel_size'] = 0
        with self.assertRaises(ValidationError) as cm:
            model_from_dict(data)
        self.assertIn('conv2.kernel_size', cm.exception.message_dict)


class FpgaDescriptorTests(SimpleTestCase):
    def test_arria10(self):
        fpga = load_fpga('arria10')
        self.assertEqual(fpga.dsp_count, 1518)
        self.assertEqual(fpga.measured_gflops, (80, 210))
        self.assertEqual(dict(fpga.pe_num_profile)[16], 0.0036)
        self.assertIn('Synthetic', fpga.profile_note)

    def test_stratix10(self):
        fpga = load_fpga('stratix10')
        self.assertEqual(fpga.burst_width_bits, 1024)
        self.assertEqual(min(fpga.pe_num_profile, key=lambda p: p[1])[0], 16)


class WeightFileTests(TempDirMixin, SimpleTestCase):
    def test_round_trip_is_bit_identical(self):
        model = zoo.resnet_toy()
        weights = synthetic_weights(model, 3)
        save_weights(self.tmp / 'w.bin', model, weights)
        loaded = load_weights(self.tmp / 'w.bin', model)
        self.assertEqual(list(loaded), list(weights))
        for name, (weight, bias) in weights.items():
            np.testing.assert_array_equal(loaded[name].weight, weight)
            np.testing.assert_array_equal(loaded[name].bias, bias)

    def test_layout(self):
        weight = np.arange(6, dtype=np.float32).reshape(2, 3)
        bias = np.array([0.5, -1.0], dtype=np.float32)
        data = encode_weights(tiny_fc_model(),
                              {'fc': LayerWeights(weight, bias)})
        self.assertEqual(data[:5], b'SCNN\x01')
        self.assertEqual(data[5:18], struct.pack('<I', 9) + b'fc.weight')
        self.assertEqual(data[18:30], struct.pack('<3I', 2, 2, 3))
        self.assertEqual(data[30:54], weight.astype('<f4').tobytes())
        self.assertEqual(data[54:65], struct.pack('<I', 7) + b'fc.bias')
        self.assertEqual(len(data), 81)

    def test_synthetic_weights(self):
        model = zoo.alexnet_toy()
        weights = synthetic_weights(model, 7)
        again = synthetic_weights(model, 7)
        for name, (weight, bias) in weights.items():
            self.assertEqual(weight.dtype, np.float32)
            self.assertLessEqual(np.abs(weight).max(), 0.1)
            np.testing.assert_array_equal(weight, again[name].weight)
        self.assertFalse(np.array_equal(
            weights['conv1'].weight,
            synthetic_weights(model, 8)['conv1'].weight))

    def test_magic_mismatch(self):
        with self.assertRaises(MagicMismatch):
            read_records(b'SCNX\x01')

    def test_unsupported_version(self):
        with self.assertRaisesMessage(MagicMismatch, 'version 2'):
            read_records(b'SCNN\x02')

    def test_short_read(self):
        data = encode_weights(tiny_fc_model(),
                              synthetic_weights(tiny_fc_model(), 0))
        with self.assertRaises(ShortRead):
            read_records(data[:-1])
        with self.assertRaises(ShortRead):
            read_records(data[:3])

    def test_errors_are_distinct(self):
        for error in (MagicMismatch, RecordShapeMismatch, ShortRead,
                      RecordNameError):
            self.assertTrue(issubclass(error, WeightFormatError))
        self.assertFalse(issubclass(ShortRead, MagicMismatch))

    def test_record_name_must_be_utf8(self):
        data = b'SCNN\x01' + struct.pack('<I', 2) + b'\xff\xfe'
        with self.assertRaisesMessage(RecordNameError, 'not UTF-8'):
            read_records(data)

    def test_wrong_shape_names_the_layer(self):
        other = ModelDescriptor('tiny', (4, 1, 1),
                                [LayerDescriptor.fc('fc', [INPUT], 2, 4)])
        save_weights(self.tmp / 'w.bin', other, synthetic_weights(other, 0))
        with self.assertRaisesMessage(RecordShapeMismatch, "'fc.weight'"):
            load_weights(self.tmp / 'w.bin', tiny_fc_model())

    def test_missing_layer(self):
        save_weights(self.tmp / 'w.bin', tiny_fc_model(),
                     synthetic_weights(tiny_fc_model(), 0))
        model = ModelDescriptor('two', (3, 1, 1), [
            LayerDescriptor.fc('fc', [INPUT], 2, 3),
            LayerDescriptor.fc('out', ['fc'], 1, 2)])
        with self.assertRaisesMessage(MissingWeightsError, "'out'"):
            load_weights(self.tmp / 'w.bin', model)

    def test_unknown_records(self):
        model = zoo.alexnet_toy()
        save_weights(self.tmp / 'w.bin', model, synthetic_weights(model, 0))
        smaller = model.replace_layers(model.layers[:-1])
        with self.assertRaisesMessage(WeightFormatError, 'fc7.bias'):
            load_weights(self.tmp / 'w.bin', smaller)


class RunOptionsTests(SimpleTestCase):
    def test_batch_bounded_by_reuse_fac(self):
        fpga = load_fpga('arria10')
        RunOptions(ArchConfig(4, 16, 2), fpga, batch=2)
        with self.assertRaises(ValidationError) as cm:
            RunOptions(ArchConfig(4, 16, 2), fpga, batch=3)
        self.assertIn('batch', cm.exception.message_dict)

    def test_invalid_config(self):
        with self.assertRaises(ValidationError):
            RunOptions(ArchConfig(0, 16, 2), load_fpga('arria10'))

    def test_unknown_mode(self):
        with self.assertRaises(ValidationError) as cm:
            RunOptions(ArchConfig(1, 1, 1), load_fpga('arria10'),
                       mode='fast')
        self.assertIn('mode', cm.exception.message_dict)


class RunInferenceTests(SimpleTestCase):
    def setUp(self):
        self.fpga = load_fpga('arria10')
        self.opts = RunOptions(ArchConfig(4, 16, 2), self.fpga)

    def run_model(self, model, opts=None, seed=0):
        opts = opts or self.opts
        weights = synthetic_weights(model, seed)
        inputs = synthetic_inputs(model.input_shape, opts.batch, seed)
        return run_inference(model, weights, inputs, opts), weights, inputs

    def test_relu_only_matches_exactly(self):
        model = ModelDescriptor('relu', (2, 3, 3),
                                [LayerDescriptor.relu('relu', [INPUT])])
        x = Tensor(np.linspace(-1, 1, 18).reshape(2, 3, 3), np.float32)
        report = run_inference(model, {}, x, self.opts)
        expected = model_ref_forward(model, x, {})['relu']
        np.testing.assert_array_equal(report.final_outputs[0].data,
                                      expected.data)

    def test_residual_model_matches_reference(self):
        model = zoo.resnet_toy()
        report, weights, inputs = self.run_model(model)
        expected = model_ref_forward(model, inputs[0], weights)
        np.testing.assert_allclose(report.final_outputs[0].data,
                                   expected['fc10'].data, rtol=1e-3,
                                   atol=1e-5)
        self.assertEqual(reference_mismatches(report, model, weights,
                                              inputs), [])

    def test_heterogeneous_models_share_one_config(self):
        cfg = self.opts.cfg
        for model in (zoo.alexnet_toy(), zoo.resnet_toy()):
            with self.subTest(model.name):
                report, weights, inputs = self.run_model(model)
                self.assertEqual(reference_mismatches(report, model, weights,
                                                      inputs), [])
                self.assertIs(report.options.cfg, cfg)
        self.assertEqual(cfg, ArchConfig(4, 16, 2))

    def test_one_record_per_layer_in_order(self):
        model = zoo.alexnet_toy()
        report, _, _ = self.run_model(model)
        self.assertEqual([record.name for record in report.layers],
                         model.layer_names())
        self.assertEqual(report.layer('fc7').shape, (10, 1, 1))
        # 8 channels fit one 16-wide lane group
        self.assertEqual(report.layer('norm1').stats.cycles, 9 * 9)

    def test_batch_equals_single_runs(self):
        model = zoo.alexnet_toy()
        opts = RunOptions(self.opts.cfg, self.fpga, batch=2)
        weights = synthetic_weights(model, 1)
        inputs = synthetic_inputs(model.input_shape, 2, 1)
        batched = run_inference(model, weights, inputs, opts)
        for image, out in zip(inputs, batched.final_outputs):
            single = run_inference(model, weights, image, self.opts)
            np.testing.assert_array_equal(out.data,
                                          single.final_outputs[0].data)

    def test_batch_shares_fc_weights(self):
        model = zoo.alexnet_toy()
        single, _, _ = self.run_model(model)
        batched, _, _ = self.run_model(
            model, RunOptions(self.opts.cfg, self.fpga, batch=2))
        self.assertEqual(batched.layer('fc6').stats.weight_bytes,
                         single.layer('fc6').stats.weight_bytes)
        self.assertEqual(batched.layer('conv1').stats.weight_bytes,
                         2 * single.layer('conv1').stats.weight_bytes)

    def test_input_count_must_match_batch(self):
        model = zoo.alexnet_toy()
        inputs = synthetic_inputs(model.input_shape, 1)
        opts = RunOptions(self.opts.cfg, self.fpga, batch=2)
        with self.assertRaises(ValueError):
            run_inference(model, synthetic_weights(model, 0), inputs, opts)

    def test_missing_weights(self):
        model = zoo.alexnet_toy()
        weights = synthetic_weights(model, 0)
        del weights['fc6']
        with self.assertRaisesMessage(MissingWeightsError, "'fc6'"):
            run_inference(model, weights,
                          synthetic_inputs(model.input_shape), self.opts)

    def test_model_only(self):
        opts = RunOptions(ArchConfig(16, 16, 4), self.fpga,
                          mode=Mode.MODEL_ONLY)
        report = run_inference(zoo.alexnet(), None, None, opts)
        self.assertEqual(len(report.layers), len(zoo.alexnet()))
        self.assertIsNone(report.simulated_cycles)
        self.assertEqual(report.layer('fc8').shape, (1000, 1, 1))
        self.assertGreater(report.total_seconds, 0)
        self.assertIsNone(report.as_dict()['layers'][0]['stats'])

    def test_report_json_is_deterministic(self):
        model = zoo.resnet_toy()
        first = to_json(self.run_model(model)[0].as_dict())
        second = to_json(self.run_model(model)[0].as_dict())
        self.assertEqual(first, second)
        self.assertEqual(json.loads(first)['totals']['simulated_cycles'],
                         self.run_model(model)[0].simulated_cycles)


@tag('slow')
class AlexNetEndToEndTests(TempDirMixin, SimpleTestCase):
    def test_seeded_weight_file_runs_every_layer(self):
        model = zoo.alexnet()
        path = self.tmp / 'alexnet.bin'
        save_weights(path, model, synthetic_weights(model, 11))
        weights = load_weights(path, model)
        inputs = synthetic_inputs(model.input_shape, seed=11)
        opts = RunOptions(ArchConfig(16, 16, 4), load_fpga('arria10'))
        report = run_inference(model, weights, inputs, opts)

        self.assertEqual([record.name for record in report.layers],
                         model.layer_names())
        self.assertEqual(report.layer('fc8').shape, (1000, 1, 1))
        self.assertGreater(report.simulated_cycles, 0)
        expected = model_ref_forward(model, inputs[0], weights)['fc8'].data
        # outputs near zero are compared at the scale of the whole vector
        np.testing.assert_allclose(report.final_outputs[0].data, expected,
                                   rtol=1e-3,
                                   atol=1e-3 * np.abs(expected).max())


@contextlib.contextmanager
def captured():
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        yield out, err


class CliTests(TempDirMixin, SimpleTestCase):
    def test_flops(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'flops', 'alexnet'])
        self.assertEqual(code, 0)
        name, gflops = out.getvalue().split()[:2]
        self.assertEqual(name, 'alexnet:')
        self.assertLess(abs(float(gflops) - 1.4), 0.15 * 1.4)

    def test_flops_json(self):
        out = io.StringIO()
        call_command('flops', 'resnet_toy', json=True, stdout=out)
        report = json.loads(out.getvalue())
        self.assertEqual(report['flops'], flop_count(zoo.resnet_toy()))
        self.assertEqual(len(report['layers']), len(zoo.resnet_toy()))

    def test_validate_bad_config(self):
        with captured() as (_, err):
            code = cli(['manage.py', 'validate', '--pe', '0'])
        self.assertEqual(code, 1)
        self.assertIn('pe_num', err.getvalue())

    def test_validate_good_config(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'validate', '--model', 'alexnet',
                        '--pe', '16', '--vec', '16', '--reuse', '4'])
        self.assertEqual(code, 0)
        self.assertIn('alexnet: valid', out.getvalue())

    def test_validate_over_budget(self):
        out = io.StringIO()
        with self.assertRaises(CommandError) as cm:
            call_command('validate', pe_num=16, reuse_fac=5, json=True,
                         stdout=out)
        self.assertEqual(cm.exception.returncode, 1)
        self.assertFalse(json.loads(out.getvalue())['valid'])

    def test_missing_descriptor_is_an_io_error(self):
        with captured():
            code = cli(['manage.py', 'flops', str(self.tmp / 'nope.json')])
        self.assertEqual(code, 2)

    def test_truncated_descriptor_is_an_io_error(self):
        path = self.write('bad.json', '{"name": "bad",')
        with captured():
            self.assertEqual(cli(['manage.py', 'flops', str(path)]), 2)

    def test_invalid_descriptor_is_a_validation_error(self):
        data = model_to_dict(zoo.alexnet_toy())
        data['layers'][0]['stride'] = 0
        path = self.write('bad.json', json.dumps(data))
        with captured():
            self.assertEqual(cli(['manage.py', 'flops', str(path)]), 1)

    def test_flops_of_bundled_file_name(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'flops', 'alexnet.json'])
        self.assertEqual(code, 0)
        self.assertTrue(out.getvalue().startswith('alexnet:'))

    def test_dse_of_bundled_file_names(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'dse', '--fpga', 'arria10.json',
                        '--model', 'alexnet.json'])
        self.assertEqual(code, 0)
        self.assertIn('reuse_fac', out.getvalue())

    def test_non_numeric_parameter_is_a_validation_error(self):
        data = model_to_dict(zoo.alexnet_toy())
        data['layers'][1]['alpha'] = 'x'
        path = self.write('bad.json', json.dumps(data))
        with captured() as (_, err):
            self.assertEqual(cli(['manage.py', 'flops', str(path)]), 1)
        self.assertIn('norm1.alpha', err.getvalue())

    def test_usage_error(self):
        with captured() as (_, err):
            code = cli(['manage.py', 'schedule-dump'])
        self.assertEqual(code, 2)
        self.assertIn('usage:', err.getvalue())

    def test_schedule_dump(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'schedule-dump', '--model', 'resnet_toy',
                        '--layer', 'res2a_branch2a', '--pe', '4', '--vec',
                        '16', '--reuse', '4'])
        self.assertEqual(code, 0)
        rows = list(csv.reader(io.StringIO(out.getvalue())))
        self.assertEqual(rows[0], ['cycle', 'ofm_group', 'tile',
                                   'channel_group', 'row', 'col',
                                   'is_padding'])
        # four tiles of one 4-wide output row, 4 + 1 - 1 row slides each
        self.assertEqual(len(rows) - 1, 16)
        self.assertEqual(rows[1], ['0', '0', '0', '0', '0', '0', '0'])

    def test_schedule_dump_rejects_other_layers(self):
        with self.assertRaises(CommandError) as cm:
            call_command('schedule_dump', model='resnet_toy', layer='pool1',
                         stdout=io.StringIO())
        self.assertEqual(cm.exception.returncode, 1)

    def test_dse(self):
        out = io.StringIO()
        call_command('dse', model='alexnet', fpga='arria10', stdout=out)
        chosen = [(row['parameter'], row['value'])
                  for row in csv.DictReader(io.StringIO(out.getvalue()))
                  if row['chosen'] == '1']
        self.assertEqual(chosen, [('vec_fac', '16'), ('pe_num', '16'),
                                  ('reuse_fac', '4')])

    def test_run_json_is_byte_identical(self):
        outputs = []
        for _ in range(2):
            with captured() as (out, _):
                code = cli(['manage.py', 'run', '--model', 'alexnet_toy',
                            '--pe', '4', '--reuse', '2', '--json'])
            self.assertEqual(code, 0)
            outputs.append(out.getvalue())
        self.assertEqual(outputs[0], outputs[1])
        self.assertEqual(len(json.loads(outputs[0])['layers']), 7)

    def test_run_check(self):
        out = io.StringIO()
        call_command('run', model='resnet_toy', pe_num=4, reuse_fac=2,
                     check=True, json=True, stdout=out)
        report = json.loads(out.getvalue())
        self.assertEqual(report['reference']['mismatched_layers'], [])

    def test_run_batch_above_reuse_fac(self):
        with self.assertRaises(CommandError) as cm:
            call_command('run', model='alexnet_toy', batch=5, reuse_fac=4,
                         stdout=io.StringIO())
        self.assertEqual(cm.exception.returncode, 1)
        self.assertIn('reuse_fac', str(cm.exception))

    def test_run_with_saved_weights_and_input(self):
        weights = self.tmp / 'w.bin'
        image = self.tmp / 'x.bin'
        synthetic_inputs((3, 19, 19), seed=4)[0].to_file(image)
        reports = []
        for extra in (['--save-weights', str(weights)],
                      ['--weights', str(weights)]):
            with captured() as (out, _):
                code = cli(['manage.py', 'run', '--model', 'alexnet_toy',
                            '--pe', '4', '--reuse', '2', '--seed', '9',
                            '--input', str(image), '--json', *extra])
            self.assertEqual(code, 0)
            reports.append(json.loads(out.getvalue()))
        self.assertEqual(reports[0]['layers'], reports[1]['layers'])

    def test_run_model_only_table(self):
        with captured() as (out, _):
            code = cli(['manage.py', 'run', '--model', 'resnet50', '--mode',
                        'model-only'])
        self.assertEqual(code, 0)
        self.assertIn('fc1000', out.getvalue())

    def test_corrupt_weights_is_an_io_error(self):
        path = self.tmp / 'w.bin'
        path.write_bytes(b'NOPE\x01')
        with captured():
            code = cli(['manage.py', 'run', '--model', 'alexnet_toy',
                        '--weights', str(path)])
        self.assertEqual(code, 2)

    def test_undecodable_record_name_is_an_io_error(self):
        path = self.tmp / 'w.bin'
        path.write_bytes(b'SCNN\x01' + struct.pack('<I', 2) + b'\xff\xfe')
        with captured():
            code = cli(['manage.py', 'run', '--model', 'alexnet_toy',
                        '--weights', str(path)])
        self.assertEqual(code, 2)

    def test_export_models(self):
        call_command('export_models', 'alexnet_toy', 'resnet_toy',
                     output_dir=self.tmp, stdout=io.StringIO())
        for name in ('alexnet_toy', 'resnet_toy'):
            self.assertEqual(load_model(str(self.tmp / f"{name}.json")),
                             load_model(name))
