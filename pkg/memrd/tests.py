import io
from itertools import groupby

from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from arch_core.config import ArchConfig
from arch_core.layers import INPUT, LayerDescriptor
from arch_core.testing import arch_configs, conv_layers

from .schedule import (CSV_COLUMNS, generate_schedule, ifm_offchip_bytes,
                       iter_events, load_event_count, tile_slide_counts)


def conv(c, stride=1, padding=0, out_channels=1, in_channels=1):
    return LayerDescriptor.conv('conv', [INPUT], out_channels, in_channels,
                                c, stride=stride, padding=padding)


def demand_set(layer, ifm_shape, cfg, oy, ox0):
    """IFM positions read by the active outputs of one tile."""
    _, in_h, in_w = ifm_shape
    c, s, p = layer.kernel_size, layer.stride, layer.padding
    out_w = (in_w + 2 * p - c) // s + 1
    needed = set()
    for ox in range(ox0, min(ox0 + cfg.reuse_fac, out_w)):
        for ky in range(c):
            for kx in range(c):
                y, x = oy * s - p + ky, ox * s - p + kx
                if 0 <= y < in_h and 0 <= x < in_w:
                    needed.add((y, x))
    return needed


class TileSlideCountTests(SimpleTestCase):
    def test_stride_one(self):
        self.assertEqual(tile_slide_counts(conv(3), ArchConfig(1, 1, 4)),
                         (6, 3))

    def test_pointwise(self):
        self.assertEqual(tile_slide_counts(conv(1), ArchConfig(1, 1, 1)),
                         (1, 1))

    def test_stride_two(self):
        self.assertEqual(
            tile_slide_counts(conv(3, stride=2), ArchConfig(1, 1, 4)), (9, 3))

    def test_rejects_non_conv_layers(self):
        pool = LayerDescriptor.maxpool('pool', [INPUT], 2)
        with self.assertRaises(ValueError):
            tile_slide_counts(pool, ArchConfig(1, 1, 1))


class GenerateScheduleTests(SimpleTestCase):
    def test_two_tiles_of_one_row(self):
        layer = conv(3, out_channels=4, in_channels=16)
        schedule = generate_schedule(layer, ArchConfig(4, 16, 4), (16, 3, 8))
        self.assertEqual(schedule.totals.vectors_loaded, 36)
        self.assertEqual({e.tile for e in schedule}, {0, 1})

    def test_single_event(self):
        layer = conv(1, in_channels=16)
        schedule = generate_schedule(layer, ArchConfig(1, 16, 1), (16, 1, 1))
        self.assertEqual(list(schedule),
                         [(0, 0, 0, 0, 0, 0, False)])
        self.assertEqual(schedule.totals.bytes_loaded, 64)

    def test_row_slide_is_innermost(self):
        layer = conv(2, in_channels=2)
        events = list(iter_events(layer, ArchConfig(1, 1, 2), (2, 3, 3)))
        self.assertEqual([(e.channel_group, e.row, e.col) for e in events[:6]],
                         [(0, 0, 0), (0, 0, 1), (0, 0, 2),
                          (0, 1, 0), (0, 1, 1), (0, 1, 2)])
        self.assertEqual(events[6].channel_group, 1)

    def test_ragged_tile_overhang_is_padding(self):
        # out_w = 5 -> tiles of 4 and 1 outputs
        layer = conv(3)
        events = list(iter_events(layer, ArchConfig(1, 1, 4), (1, 3, 7)))
        last_tile = [e for e in events if e.tile == 1]
        self.assertEqual(len(last_tile), 18)
        fetched = {e.col for e in last_tile if not e.is_padding}
        self.assertEqual(fetched, {4, 5, 6})

    def test_padding_region_is_flagged(self):
        layer = conv(3, padding=1)
        schedule = generate_schedule(layer, ArchConfig(1, 1, 1), (1, 2, 2))
        for event in schedule:
            inside = 0 <= event.row < 2 and 0 <= event.col < 2
            self.assertEqual(event.is_padding, not inside)
        self.assertGreater(schedule.totals.padded_vector_count, 0)

    def test_grouped_layer_runs_all_ofm_groups(self):
        layer = LayerDescriptor.conv('conv', [INPUT], 6, 2, 1, groups=2)
        events = list(iter_events(layer, ArchConfig(2, 1, 1), (4, 1, 1)))
        self.assertEqual(sorted({e.ofm_group for e in events}), [0, 1, 2, 3])

    def test_csv_format(self):
        layer = conv(3, padding=1)
        schedule = generate_schedule(layer, ArchConfig(1, 1, 2), (1, 3, 3))
        stream = io.StringIO()
        schedule.write_csv(stream)
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[0], ','.join(CSV_COLUMNS))
        self.assertEqual(lines[1], '0,0,0,0,-1,-1,1')
        self.assertEqual(len(lines), len(schedule) + 1)


class SchedulePropertyTests(SimpleTestCase):
    @settings(max_examples=50, deadline=None)
    @given(conv_layers(), arch_configs())
    def test_tiles_cover_their_demand(self, case, cfg):
        layer, ifm_shape = case
        out_w = (ifm_shape[2] + 2 * layer.padding
                 - layer.kernel_size) // layer.stride + 1
        tiles_per_row = -(-out_w // cfg.reuse_fac)
        events = iter_events(layer, cfg, ifm_shape)
        key = lambda e: (e.ofm_group, e.tile, e.channel_group)
        for (_, tile, _), block in groupby(events, key):
            fetched = {(e.row, e.col) for e in block if not e.is_padding}
            oy, t = divmod(tile, tiles_per_row)
            self.assertEqual(fetched, demand_set(layer, ifm_shape, cfg, oy,
                                                 t * cfg.reuse_fac))

    @settings(max_examples=50, deadline=None)
    @given(conv_layers(), arch_configs())
    def test_cycles_are_consecutive(self, case, cfg):
        layer, ifm_shape = case
        cycles = [e.cycle for e in iter_events(layer, cfg, ifm_shape)]
        self.assertEqual(cycles, list(range(len(cycles))))
        self.assertEqual(len(cycles), load_event_count(layer, cfg, ifm_shape))

    @settings(max_examples=20, deadline=None)
    @given(conv_layers(), arch_configs())
    def test_closed_form_matches_schedule(self, case, cfg):
        layer, ifm_shape = case
        schedule = generate_schedule(layer, cfg, ifm_shape)
        self.assertEqual(ifm_offchip_bytes(layer, cfg, ifm_shape),
                         schedule.totals.bytes_loaded)
        self.assertEqual(schedule.totals.streamed_bytes,
                         schedule.totals.vectors_loaded * cfg.vec_fac * 4)

    @settings(max_examples=20, deadline=None)
    @given(conv_layers(), st.sampled_from([1, 2, 4, 16]),
           st.sampled_from([1, 2, 4, 16]))
    def test_bytes_independent_of_reuse_fac(self, case, pe_num, vec_fac):
        layer, ifm_shape = case
        loaded = {generate_schedule(layer, ArchConfig(pe_num, vec_fac, reuse),
                                    ifm_shape).totals.bytes_loaded
                  for reuse in (1, 2, 4)}
        self.assertEqual(len(loaded), 1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 4))
    def test_stride_one_tiles_are_minimal(self, c, reuse):
        layer = conv(c, in_channels=2)
        cfg = ArchConfig(1, 1, reuse)
        events = iter_events(layer, cfg, (2, c, c + 2 * reuse))
        key = lambda e: (e.tile, e.channel_group)
        for _, block in groupby(events, key):
            self.assertEqual(len(list(block)), (reuse + c - 1) * c)

    def test_bytes_increase_with_ifm_size(self):
        cfg = ArchConfig(4, 4, 2)
        for c, stride, padding in ((3, 1, 1), (3, 1, 0), (1, 1, 0)):
            layer = conv(c, stride=stride, padding=padding, in_channels=4)
            sizes = [ifm_offchip_bytes(layer, cfg, (4, n, n))
                     for n in range(c, c + 8)]
            self.assertEqual(sizes, sorted(set(sizes)))
