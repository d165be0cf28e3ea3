import json

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from arch_core import zoo
from arch_core.config import ArchConfig, FpgaSpec
from arch_core.layers import INPUT, LayerDescriptor, ModelDescriptor
from arch_core.testing import (CONFIG_VALUES, arch_configs, conv_layers,
                               random_ifm, random_weights)
from pe_array.engine import BatchSizeError, simulate_conv

from .model import (Bound, conv_cycles, conv_latency, dsp_usage, fc_latency,
                    model_latency)


ARRIA10 = FpgaSpec(name='arria10', dsp_count=1518, burst_width_bits=512,
                   mem_bandwidth_bytes_per_sec=19.2e9, f_clk_hz=200e6,
                   dsp_per_lane=1.0, dsp_overhead_per_ip_unit=7.71875,
                   measured_gflops=(80.0, 210.0))

UNLIMITED = FpgaSpec(name='unlimited', dsp_count=1518, burst_width_bits=512,
                     mem_bandwidth_bytes_per_sec=float('inf'),
                     f_clk_hz=200e6)

FC6 = LayerDescriptor.fc('fc6', ['pool5'], 4096, 9216)


class ConvCyclesTests(SimpleTestCase):
    def test_single_mac(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 1, 1, 1)
        self.assertEqual(conv_cycles(layer, ArchConfig(1, 1, 1), (1, 1, 1)),
                         (1, 1))

    def test_load_to_compute_ratio(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 16, 16, 3)
        compute, load = conv_cycles(layer, ArchConfig(16, 16, 4), (16, 3, 6))
        self.assertEqual((compute, load), (9, 18))

    @settings(max_examples=50, deadline=None)
    @given(conv_layers(), arch_configs(), st.integers(0, 2**31 - 1))
    def test_equals_simulator_counters(self, case, cfg, seed):
        layer, ifm_shape = case
        rng = np.random.default_rng(seed)
        weights = random_weights(rng, layer)
        _, stats = simulate_conv(random_ifm(rng, ifm_shape), weights.weight,
                                 weights.bias, layer, cfg)
        self.assertEqual(conv_cycles(layer, cfg, ifm_shape),
                         (stats.compute_cycles, stats.load_cycles))

    @settings(max_examples=50, deadline=None)
    @given(conv_layers(max_size=12, max_channels=20, max_filters=20),
           arch_configs(), st.sampled_from(['pe_num', 'vec_fac',
                                            'reuse_fac']))
    def test_compute_non_increasing_in_each_parameter(self, case, cfg, name):
        layer, ifm_shape = case
        previous = None
        for value in CONFIG_VALUES:
            compute, _ = conv_cycles(layer, ArchConfig(**{**cfg.as_dict(),
                                                          name: value}),
                                     ifm_shape)
            if previous is not None:
                self.assertLessEqual(compute, previous)
            previous = compute


class FcLatencyTests(SimpleTestCase):
    def test_fc6_is_weight_bound(self):
        latency = fc_latency(FC6, ArchConfig(16, 16, 4), ARRIA10)
        self.assertEqual(latency.bound, Bound.WEIGHT_MEMORY)
        self.assertEqual(latency.compute_cycles, 256 * 576)
        self.assertEqual(latency.weight_cycles, 9216 * 4096 * 4 // 96)

    def test_batch_divides_weight_bound_latency(self):
        cfg = ArchConfig(16, 16, 4)
        single = fc_latency(FC6, cfg, ARRIA10, batch=1)
        batched = fc_latency(FC6, cfg, ARRIA10, batch=4)
        self.assertEqual(batched.bound, Bound.WEIGHT_MEMORY)
        self.assertAlmostEqual(batched.seconds, single.seconds / 4,
                               delta=single.seconds / 400)

    def test_unlimited_bandwidth_is_compute_bound(self):
        latency = fc_latency(FC6, ArchConfig(16, 16, 4), UNLIMITED)
        self.assertEqual(latency.bound, Bound.COMPUTE)
        self.assertEqual(latency.seconds, 256 * 576 / 200e6)

    def test_batch_larger_than_reuse_fac(self):
        with self.assertRaisesMessage(BatchSizeError, 'reuse_fac'):
            fc_latency(FC6, ArchConfig(16, 16, 2), ARRIA10, batch=3)


class ConvLatencyTests(SimpleTestCase):
    def test_seconds_follow_the_slowest_activity(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 64, 64, 3, padding=1)
        latency = conv_latency(layer, ArchConfig(16, 16, 4), ARRIA10,
                               (64, 14, 14))
        self.assertEqual(latency.seconds, latency.cycles / 200e6)
        self.assertEqual(latency.cycles,
                         max(latency.compute_cycles, latency.load_cycles,
                             latency.weight_cycles))


class DspUsageTests(SimpleTestCase):
    def test_calibrated_arria10_is_full(self):
        report = dsp_usage(ArchConfig(16, 16, 4), ARRIA10)
        self.assertAlmostEqual(report.dsp_used, 1518)
        self.assertAlmostEqual(report.dsp_utilization, 1.0)
        self.assertTrue(report.feasible)
        self.assertAlmostEqual(report.peak_gflops, 409.6)

    def test_measured_efficiency_annotation(self):
        report = dsp_usage(ArchConfig(16, 16, 4), ARRIA10)
        low, high = report.measured_efficiency
        self.assertAlmostEqual(low, 80 / 409.6)
        self.assertAlmostEqual(high, 210 / 409.6)

    def test_doubling_reuse_doubles_dsps(self):
        small = dsp_usage(ArchConfig(16, 16, 2), ARRIA10)
        large = dsp_usage(ArchConfig(16, 16, 4), ARRIA10)
        self.assertAlmostEqual(large.dsp_used, 2 * small.dsp_used)

    def test_overcommitted_is_capped_and_flagged(self):
        report = dsp_usage(ArchConfig(16, 16, 5), ARRIA10)
        self.assertFalse(report.feasible)
        self.assertGreater(report.dsp_utilization, 1)
        self.assertEqual(report.as_dict()['dsp_utilization'], 1.0)

    def test_peak_is_twice_the_parallelism(self):
        for pe, vec, reuse in ((1, 1, 1), (16, 32, 6), (3, 5, 7)):
            cfg = ArchConfig(pe, vec, reuse)
            self.assertEqual(dsp_usage(cfg, ARRIA10).peak_gflops,
                             2 * cfg.total_parallelism() * 200e6 / 1e9)


class ModelLatencyTests(SimpleTestCase):
    def test_single_layer(self):
        model = ModelDescriptor('fc', (9216, 1, 1), [
            LayerDescriptor.fc('fc6', [INPUT], 4096, 9216)])
        cfg = ArchConfig(16, 16, 4)
        result = model_latency(model, cfg, ARRIA10)
        self.assertEqual(result.total_seconds,
                         fc_latency(model.layers[0], cfg, ARRIA10).seconds)

    def test_alexnet_batch_shrinks_fc_share_only(self):
        model = zoo.alexnet()
        cfg = ArchConfig(16, 16, 4)
        single = model_latency(model, cfg, ARRIA10, batch=1)
        batched = model_latency(model, cfg, ARRIA10, batch=4)
        self.assertEqual(single.seconds_of('conv'), batched.seconds_of('conv'))
        self.assertAlmostEqual(single.seconds_of('fc')
                               / batched.seconds_of('fc'), 4, delta=0.05)
        self.assertLess(batched.total_seconds, single.total_seconds)

    def test_alexnet_non_increasing_in_reuse_fac(self):
        model = zoo.alexnet()
        totals = [model_latency(model, ArchConfig(16, 16, reuse),
                                ARRIA10).total_seconds
                  for reuse in (1, 2, 3, 4)]
        self.assertEqual(totals, sorted(totals, reverse=True))

    def test_report_is_json_serializable(self):
        result = model_latency(zoo.resnet_toy(), ArchConfig(4, 4, 2), ARRIA10)
        report = json.loads(json.dumps(result.as_dict()))
        self.assertEqual([layer['name'] for layer in report['layers']],
                         zoo.resnet_toy().layer_names())
        self.assertIn(report['layers'][0]['bound'],
                      ('compute', 'ifm_load', 'weight_memory'))
