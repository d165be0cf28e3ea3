import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from arch_core.config import ArchConfig
from arch_core.errors import ShapeError
from arch_core.layers import INPUT, LayerDescriptor
from arch_core.testing import (arch_configs, conv_layers, random_ifm,
                               random_weights)
from memrd.schedule import generate_schedule, ifm_offchip_bytes
from oracle_ops.reference import conv_ref, fc_ref, relu_ref

from .engine import (BatchSizeError, SystolicArray, adder_tree, shift_trace,
                     simulate_conv, simulate_fc)


def naive_conv_f32(x, w, b, stride, padding):
    """Single-precision six-deep loop nest, bias added last."""
    op_dim, ic_dim, c, _ = w.shape
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    out_h = (padded.shape[1] - c) // stride + 1
    out_w = (padded.shape[2] - c) // stride + 1
    out = np.zeros((op_dim, out_h, out_w), dtype=np.float32)
    for f in range(op_dim):
        for oy in range(out_h):
            for ox in range(out_w):
                acc = np.float32(0)
                for ch in range(ic_dim):
                    for ky in range(c):
                        for kx in range(c):
                            y, x = oy * stride + ky, ox * stride + kx
                            acc = acc + w[f, ch, ky, kx] * padded[ch, y, x]
                out[f, oy, ox] = acc + b[f]
    return out


def conv_case(seed, layer, ifm_shape):
    rng = np.random.default_rng(seed)
    weights = random_weights(rng, layer)
    return random_ifm(rng, ifm_shape), weights.weight, weights.bias


class AdderTreeTests(SimpleTestCase):
    def test_pairwise_order(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0], dtype=np.float32)
        # ((1 + 2) + (3 + 4)) + ((5 + 0) + (0 + 0))
        self.assertEqual(adder_tree(x), np.float32(15))

    def test_single_lane(self):
        self.assertEqual(adder_tree(np.array([[2.5], [1.5]])).tolist(),
                         [2.5, 1.5])

    def test_reduces_last_axis(self):
        x = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        np.testing.assert_array_equal(adder_tree(x), x.sum(axis=-1))


class SimulateConvTests(SimpleTestCase):
    def test_unit_config_is_bit_equal_to_naive_loop(self):
        for stride, padding in ((1, 0), (2, 1)):
            layer = LayerDescriptor.conv('conv', [INPUT], 3, 4, 3,
                                         stride=stride, padding=padding)
            x, w, b = conv_case(1, layer, (4, 6, 6))
            out, _ = simulate_conv(x, w, b, layer, ArchConfig(1, 1, 1))
            np.testing.assert_array_equal(
                out.data, naive_conv_f32(x, w, b, stride, padding))

    def test_matches_oracle_at_a_mid_size_config(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 32, 16, 3, padding=1)
        x, w, b = conv_case(2, layer, (16, 8, 8))
        out, _ = simulate_conv(x, w, b, layer, ArchConfig(4, 16, 2))
        np.testing.assert_allclose(out.data, conv_ref(x, w, b, layer).data,
                                   rtol=1e-4, atol=1e-5)

    def test_fused_relu(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 4, 2, 3,
                                     apply_relu=True)
        x, w, b = conv_case(3, layer, (2, 5, 5))
        out, _ = simulate_conv(x, w, b, layer, ArchConfig(2, 2, 2))
        expected = relu_ref(conv_ref(x, w, b, layer))
        np.testing.assert_allclose(out.data, expected.data, rtol=1e-4,
                                   atol=1e-5)
        self.assertGreaterEqual(out.data.min(), 0)

    def test_stats_follow_the_schedule(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 5, 3, 3, stride=2,
                                     padding=1)
        cfg = ArchConfig(2, 2, 3)
        x, w, b = conv_case(4, layer, (3, 7, 7))
        _, stats = simulate_conv(x, w, b, layer, cfg)
        schedule = generate_schedule(layer, cfg, (3, 7, 7))
        self.assertEqual(stats.load_cycles, schedule.totals.vectors_loaded)
        self.assertEqual(stats.ifm_bytes, schedule.totals.bytes_loaded)
        self.assertEqual(stats.weight_bytes, w.size * 4)
        self.assertEqual(stats.ofm_bytes, 5 * 4 * 4 * 4)
        self.assertEqual(stats.drain_cycles, 2)
        self.assertEqual(stats.total_cycles,
                         stats.weight_cycles + max(stats.load_cycles,
                                                   stats.compute_cycles) + 2)

    def test_shape_mismatch(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 2, 3, 3)
        with self.assertRaisesMessage(ShapeError, "layer 'conv'"):
            simulate_conv(np.zeros((2, 5, 5)), np.zeros((2, 3, 3, 3)),
                          np.zeros(2), layer, ArchConfig(1, 1, 1))

    def test_invalid_config(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 1, 1, 1)
        with self.assertRaises(ValidationError):
            simulate_conv(np.zeros((1, 1, 1)), np.zeros((1, 1, 1, 1)),
                          np.zeros(1), layer, ArchConfig(0, 1, 1))

    def test_deterministic(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 6, 5, 3, padding=1)
        x, w, b = conv_case(5, layer, (5, 6, 6))
        cfg = ArchConfig(4, 4, 4)
        first, stats = simulate_conv(x, w, b, layer, cfg)
        second, again = simulate_conv(x, w, b, layer, cfg)
        self.assertEqual(first.data.tobytes(), second.data.tobytes())
        self.assertEqual(stats, again)

    @settings(max_examples=200, deadline=None)
    @given(conv_layers(), arch_configs(), st.integers(0, 2**31 - 1))
    def test_matches_oracle_for_any_config(self, case, cfg, seed):
        layer, ifm_shape = case
        x, w, b = conv_case(seed, layer, ifm_shape)
        out, stats = simulate_conv(x, w, b, layer, cfg)
        np.testing.assert_allclose(out.data, conv_ref(x, w, b, layer).data,
                                   rtol=1e-4, atol=1e-5)
        self.assertGreaterEqual(stats.total_cycles,
                                max(stats.load_cycles, stats.compute_cycles))

    @settings(max_examples=50, deadline=None)
    @given(conv_layers(), arch_configs(), arch_configs())
    def test_macs_are_config_invariant(self, case, cfg, other):
        layer, ifm_shape = case
        x, w, b = conv_case(0, layer, ifm_shape)
        _, stats = simulate_conv(x, w, b, layer, cfg)
        _, other_stats = simulate_conv(x, w, b, layer, other)
        _, out_h, out_w = conv_ref(x, w, b, layer).shape
        expected = (out_h * out_w * layer.out_channels
                    * layer.kernel_size ** 2 * layer.in_channels)
        self.assertEqual(stats.macs_performed, expected)
        self.assertEqual(other_stats.macs_performed, expected)
        self.assertEqual(stats.ifm_bytes,
                         ifm_offchip_bytes(layer, cfg, ifm_shape))


class SystolicArrayTests(SimpleTestCase):
    def test_weight_cache_holds_one_ofm(self):
        cfg = ArchConfig(3, 2, 2)
        array = SystolicArray(cfg, 2, 1)
        weights = np.arange(4, dtype=np.float32).reshape(2, 2, 1, 1)
        cycles = array.load_weights(6, weights)
        self.assertEqual(cycles, 2)
        self.assertEqual([pe.ofm for pe in array.pes], [6, 7, None])
        np.testing.assert_array_equal(array.pe(1).weight_cache[:, 0, 0],
                                      [2, 3])
        np.testing.assert_array_equal(array.pe(2).weight_cache, 0)

    def test_ip_units_accumulate_independently(self):
        cfg = ArchConfig(1, 2, 2)
        array = SystolicArray(cfg, 2, 1)
        array.accumulate(np.array([[1, 2]], dtype=np.float32),
                         np.array([[1, 1], [3, 4]], dtype=np.float32))
        self.assertEqual([u.accumulator for u in array.pe(0).ip_units],
                         [3, 11])
        array.reset_accumulators()
        self.assertEqual([u.accumulator for u in array.pe(0).ip_units],
                         [0, 0])

    def test_drain_reads_the_first_ip_units(self):
        cfg = ArchConfig(1, 2, 3)
        array = SystolicArray(cfg, 2, 1)
        array.accumulate(np.array([[1, 2]], dtype=np.float32),
                         np.array([[1, 1], [3, 4], [0, 1]], dtype=np.float32))
        drained = array.pe(0).drain(0.5, 2)
        self.assertEqual(drained.dtype, np.float32)
        np.testing.assert_array_equal(drained, [3.5, 11.5])

    def test_shift_register_chain(self):
        array = SystolicArray(ArchConfig(3, 1, 1), 1)
        for payload in 'abc':
            array.shift(payload)
        self.assertEqual([pe.shift_out for pe in array.pes], ['c', 'b', 'a'])


class SimulateFcTests(SimpleTestCase):
    def setUp(self):
        rng = np.random.default_rng(6)
        self.w = rng.uniform(-0.1, 0.1, (20, 37)).astype(np.float32)
        self.b = rng.uniform(-0.1, 0.1, 20).astype(np.float32)
        self.x = rng.standard_normal((4, 37)).astype(np.float32)

    def test_matches_oracle_per_image(self):
        out, _ = simulate_fc(self.x, self.w, self.b, ArchConfig(4, 16, 4))
        for image, row in zip(self.x, out):
            np.testing.assert_allclose(row, fc_ref(image, self.w, self.b),
                                       rtol=1e-4, atol=1e-5)

    def test_batch_shares_weight_traffic(self):
        cfg = ArchConfig(4, 16, 4)
        _, single = simulate_fc(self.x[:1], self.w, self.b, cfg)
        _, batched = simulate_fc(self.x, self.w, self.b, cfg, batch=4)
        self.assertEqual(batched.weight_bytes, single.weight_bytes)
        self.assertEqual(batched.compute_cycles, single.compute_cycles)

    def test_batch_larger_than_reuse_fac(self):
        x = np.zeros((5, 37), dtype=np.float32)
        with self.assertRaisesMessage(BatchSizeError,
                                      'batch size must be <= reuse_fac'):
            simulate_fc(x, self.w, self.b, ArchConfig(4, 16, 4), batch=5)

    def test_identity_weights(self):
        x = np.array([[1.5, -2.0, 0.25]], dtype=np.float32)
        for cfg in (ArchConfig(1, 1, 1), ArchConfig(2, 2, 1),
                    ArchConfig(16, 16, 4)):
            out, _ = simulate_fc(x, np.eye(3), np.zeros(3), cfg)
            np.testing.assert_array_equal(out, x)

    def test_batch_equals_independent_runs(self):
        cfg = ArchConfig(3, 4, 4)
        out, _ = simulate_fc(self.x, self.w, self.b, cfg)
        for i, image in enumerate(self.x):
            single, _ = simulate_fc(image, self.w, self.b, cfg)
            np.testing.assert_array_equal(out[i], single[0])

    def test_cycle_counts(self):
        _, stats = simulate_fc(self.x[:2], self.w, self.b,
                               ArchConfig(8, 16, 2))
        # 3 passes of 8 PEs, 3 channel groups of 16
        self.assertEqual(stats.compute_cycles, 9)
        self.assertEqual(stats.load_cycles, 9)
        self.assertEqual(stats.weight_cycles, 60)
        self.assertEqual(stats.macs_performed, 20 * 37 * 2)
        self.assertEqual(stats.ifm_bytes, 3 * 2 * 3 * 16 * 4)


class ShiftTraceTests(SimpleTestCase):
    def schedule(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 2, 2, 3, padding=1)
        return generate_schedule(layer, ArchConfig(1, 1, 2), (2, 4, 4))

    def test_single_pe_sees_the_schedule(self):
        schedule = self.schedule()
        (arrivals,) = shift_trace(ArchConfig(1, 1, 2), schedule)
        self.assertEqual([a.event for a in arrivals], list(schedule))
        self.assertEqual([a.cycle for a in arrivals],
                         [e.cycle for e in schedule])

    def test_last_pe_first_arrival(self):
        arrivals = shift_trace(ArchConfig(16, 1, 2), self.schedule())
        self.assertEqual(arrivals[15][0].cycle, 15)

    @settings(max_examples=20, deadline=None)
    @given(conv_layers(max_size=4, max_channels=2, max_filters=2),
           st.integers(1, 6))
    def test_every_pe_sees_the_schedule_shifted(self, case, pe_num):
        layer, ifm_shape = case
        cfg = ArchConfig(pe_num, 1, 2)
        schedule = generate_schedule(layer, cfg, ifm_shape)
        for n, arrivals in enumerate(shift_trace(cfg, schedule)):
            self.assertEqual([(a.cycle - n, a.event) for a in arrivals],
                             [(e.cycle, e) for e in schedule])
