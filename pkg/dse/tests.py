import csv
import io

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from arch_core import zoo
from arch_core.config import ArchConfig, FpgaSpec
from arch_core.layers import INPUT, LayerDescriptor, ModelDescriptor
from host_runtime.descriptors import load_fpga
from perf_model.model import Bound, dsp_usage

from .explore import (InfeasibleDesign, SweepPoint, SweepResult, explore,
                      knee, pe_num_layers, select_vec_fac, sweep_pe_num,
                      sweep_reuse_fac, write_dse_csv)


ARRIA10 = FpgaSpec(name='arria10', dsp_count=1518, burst_width_bits=512,
                   mem_bandwidth_bytes_per_sec=19.2e9, f_clk_hz=200e6,
                   dsp_per_lane=1.0, dsp_overhead_per_ip_unit=7.71875)


def board(**changes):
    fields = dict(name='board', dsp_count=1518, burst_width_bits=512,
                  mem_bandwidth_bytes_per_sec=19.2e9, f_clk_hz=200e6,
                  dsp_per_lane=1.0, dsp_overhead_per_ip_unit=7.71875)
    fields.update(changes)
    return FpgaSpec(**fields)


def conv_only_model():
    return ModelDescriptor('conv_only', (16, 8, 8), [
        LayerDescriptor.conv('conv', [INPUT], 32, 16, 3, padding=1)])


def point(value, seconds, bound=Bound.COMPUTE):
    return SweepPoint(value, seconds, None, bound)


class VecFacTests(SimpleTestCase):
    def test_one_word_per_burst_lane(self):
        self.assertEqual(select_vec_fac(ARRIA10), 16)
        self.assertEqual(select_vec_fac(board(burst_width_bits=1024)), 32)
        self.assertEqual(select_vec_fac(board(burst_width_bits=32)), 1)

    def test_burst_must_hold_whole_words(self):
        with self.assertRaises(ValidationError):
            board(burst_width_bits=520)

    def test_bundled_boards_deliver_a_vector_per_cycle(self):
        for name in ('arria10', 'stratix10'):
            with self.subTest(name):
                fpga = load_fpga(name)
                self.assertLessEqual(select_vec_fac(fpga) * 4,
                                     fpga.bytes_per_cycle())


class KneeTests(SimpleTestCase):
    def test_walks_to_the_end_while_gains_are_large(self):
        self.assertEqual(knee([point(2, 4.0), point(4, 2.0),
                               point(6, 1.0)]), 6)

    def test_stops_before_a_small_gain(self):
        self.assertEqual(knee([point(2, 4.0), point(4, 2.0),
                               point(6, 1.96)]), 4)

    def test_stops_before_a_memory_bound_point(self):
        self.assertEqual(knee([point(2, 4.0),
                               point(4, 1.0, Bound.WEIGHT_MEMORY)]), 2)

    def test_memory_bound_first_point(self):
        self.assertEqual(knee([point(2, 4.0, Bound.WEIGHT_MEMORY),
                               point(4, 2.0, Bound.WEIGHT_MEMORY)]), 2)

    def test_single_point(self):
        self.assertEqual(knee([point(8, 1.0)]), 8)

    def test_chosen_must_be_swept(self):
        with self.assertRaises(ValueError):
            SweepResult('pe_num', [point(2, 1.0)], 4, 'rule')


class PeNumSweepTests(SimpleTestCase):
    def test_profile_knee(self):
        result = sweep_pe_num(zoo.alexnet(), load_fpga('arria10'), 16)
        self.assertEqual(result.chosen, 16)
        self.assertEqual([p.value for p in result.points],
                         list(range(2, 21, 2)))
        self.assertEqual(result.chosen_point.seconds, 0.0036)
        self.assertEqual(result.points[-1].bound, Bound.WEIGHT_MEMORY)

    def test_profile_must_cover_the_values(self):
        with self.assertRaisesMessage(ValueError, 'no point for pe_num [3]'):
            sweep_pe_num(zoo.alexnet(), load_fpga('arria10'), 16, [2, 3])

    def test_unlimited_bandwidth_takes_the_largest(self):
        fpga = board(mem_bandwidth_bytes_per_sec=float('inf'))
        result = sweep_pe_num(zoo.alexnet(), fpga, 16)
        self.assertEqual(result.chosen, 20)
        self.assertTrue(all(p.bound == Bound.COMPUTE for p in result.points))

    def test_vanishing_bandwidth_takes_the_smallest(self):
        fpga = board(mem_bandwidth_bytes_per_sec=1.0)
        result = sweep_pe_num(zoo.alexnet(), fpga, 16)
        self.assertEqual(result.chosen, 2)
        self.assertEqual(result.points[0].bound, Bound.WEIGHT_MEMORY)

    def test_seconds_non_increasing_at_unlimited_bandwidth(self):
        fpga = board(mem_bandwidth_bytes_per_sec=float('inf'))
        seconds = [p.seconds
                   for p in sweep_pe_num(zoo.alexnet(), fpga, 16).points]
        self.assertEqual(seconds, sorted(seconds, reverse=True))

    def test_conv_only_model(self):
        model = conv_only_model()
        self.assertEqual([layer.name for layer in pe_num_layers(model)],
                         ['conv'])
        fpga = board(mem_bandwidth_bytes_per_sec=float('inf'))
        result = sweep_pe_num(model, fpga, 16)
        # 32 filters need 4 passes at pe_num 8 and at pe_num 10
        self.assertEqual(result.chosen, 8)
        self.assertIn('conv', result.rule)

    def test_model_without_conv_or_fc(self):
        model = ModelDescriptor('relu_only', (1, 2, 2),
                                [LayerDescriptor.relu('relu', [INPUT])])
        with self.assertRaises(ValueError):
            sweep_pe_num(model, board(), 16)


class ReuseFacSweepTests(SimpleTestCase):
    def test_arria10_budget(self):
        result = sweep_reuse_fac(zoo.alexnet(), ARRIA10, 16, 16, range(1, 9))
        self.assertEqual(result.chosen, 4)
        self.assertAlmostEqual(result.chosen_point.dsp_utilization, 1.0)

    def test_next_value_exceeds_the_budget(self):
        result = sweep_reuse_fac(zoo.alexnet(), ARRIA10, 16, 16, range(1, 9))
        after = dsp_usage(ArchConfig(16, 16, result.chosen + 1), ARRIA10)
        self.assertFalse(after.feasible)

    def test_budget_scales_with_dsp_count(self):
        result = sweep_reuse_fac(zoo.alexnet(), board(dsp_count=2277), 16,
                                 16, range(1, 9))
        self.assertEqual(result.chosen, 6)

    def test_nothing_fits(self):
        with self.assertRaisesMessage(InfeasibleDesign, 'has 1 DSP blocks'):
            sweep_reuse_fac(zoo.alexnet(), board(dsp_count=1), 16, 16,
                            range(1, 4))


class ExploreTests(SimpleTestCase):
    def test_arria10_alexnet(self):
        result = explore(zoo.alexnet(), load_fpga('arria10'))
        self.assertEqual(result.cfg, ArchConfig(16, 16, 4))

    def test_stratix10_alexnet(self):
        result = explore(zoo.alexnet(), load_fpga('stratix10'))
        self.assertEqual(result.cfg, ArchConfig(16, 32, 6))

    def test_equals_the_steps_chained_by_hand(self):
        model, fpga = zoo.alexnet(), load_fpga('arria10')
        vec = select_vec_fac(fpga)
        pe = sweep_pe_num(model, fpga, vec).chosen
        reuse = sweep_reuse_fac(model, fpga, vec, pe).chosen
        self.assertEqual(explore(model, fpga).cfg, ArchConfig(pe, vec, reuse))

    def test_threads_do_not_change_the_result(self):
        model, fpga = zoo.alexnet(), ARRIA10
        serial = explore(model, fpga, reuse_values=range(1, 9), threads=0)
        threaded = explore(model, fpga, reuse_values=range(1, 9), threads=4)
        self.assertEqual(serial, threaded)

    def test_csv_marks_the_chosen_rows(self):
        stream = io.StringIO()
        write_dse_csv(explore(zoo.alexnet(), load_fpga('arria10')), stream)
        rows = list(csv.DictReader(io.StringIO(stream.getvalue())))
        chosen = [(row['parameter'], row['value'])
                  for row in rows if row['chosen'] == '1']
        self.assertEqual(chosen, [('vec_fac', '16'), ('pe_num', '16'),
                                  ('reuse_fac', '4')])
        self.assertEqual(len(rows), 1 + 10 + 32)
