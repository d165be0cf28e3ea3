"""Off-chip IFM load schedule of the MemRD kernel.

For every group of pe_num output feature maps, the OFM plane is cut into
tiles of reuse_fac outputs along each row. For each tile and each group of
vec_fac input channels, a window slides over the IFM: c times down the column
(kernel rows) and, inside that, row_slides times along the row, loading one
1 x 1 x vec_fac vector per cycle into the shift-register buffer.

Loop order, outermost first:
    ofm_group, tile (row-major), channel_group, column slide, row slide
"""

from collections import namedtuple
import csv
from dataclasses import dataclass
import logging
from math import ceil

from arch_core.config import WORD_BYTES, validate_arch


logger = logging.getLogger(__name__)


LoadEvent = namedtuple(
    'LoadEvent',
    'cycle, ofm_group, tile, channel_group, row, col, is_padding')
"""One vector load. row and col are IFM coordinates and may lie in the
padding region, or past the right edge for the overhang of a ragged tile;
such loads are synthesized zeros and have is_padding set.
"""

CSV_COLUMNS = LoadEvent._fields


ConvGeometry = namedtuple(
    'ConvGeometry',
    'in_h, in_w, out_h, out_w, c, stride, padding, groups, ic_dim, '
    'op_per_group, channel_groups, ofm_groups_per_conv_group, ofm_groups, '
    'tiles_per_row, tiles, row_slides, col_slides')


def _require_conv(layer):
    if layer.kind != 'conv':
        raise ValueError(f"layer {layer.name!r} is a {layer.kind} layer; "
                         'load schedules exist for conv layers only')


def tile_slide_counts(layer, cfg):
    """Return (row_slides, col_slides) of the loading window for one tile.

    Along the row the window must cover the union of reuse_fac kernel
    windows spaced stride apart; along the column it covers one kernel.
    """
    _require_conv(layer)
    c, s = layer.kernel_size, layer.stride
    return s * (cfg.reuse_fac - 1) + c, c


def conv_geometry(layer, cfg, ifm_shape):
    """Collect every loop bound of a conv layer's schedule."""
    _require_conv(layer)
    validate_arch(cfg)
    _, in_h, in_w = ifm_shape
    c, s, p, groups = (layer.kernel_size, layer.stride, layer.padding,
                       layer.groups)
    out_h = (in_h + 2 * p - c) // s + 1
    out_w = (in_w + 2 * p - c) // s + 1
    op_per_group = layer.out_channels // groups
    per_conv_group = ceil(op_per_group / cfg.pe_num)
    tiles_per_row = ceil(out_w / cfg.reuse_fac)
    row_slides, col_slides = tile_slide_counts(layer, cfg)
    return ConvGeometry(
        in_h=in_h, in_w=in_w, out_h=out_h, out_w=out_w, c=c, stride=s,
        padding=p, groups=groups, ic_dim=layer.in_channels,
        op_per_group=op_per_group,
        channel_groups=ceil(layer.in_channels / cfg.vec_fac),
        ofm_groups_per_conv_group=per_conv_group,
        ofm_groups=groups * per_conv_group,
        tiles_per_row=tiles_per_row, tiles=out_h * tiles_per_row,
        row_slides=row_slides, col_slides=col_slides)


def demanded(dx, active, stride, c):
    """Whether row offset dx of a tile window feeds one of its active
    outputs."""
    u = min(active - 1, dx // stride)
    return dx - u * stride < c


def iter_events(layer, cfg, ifm_shape):
    """Yield the LoadEvents of a conv layer in schedule order."""
    g = conv_geometry(layer, cfg, ifm_shape)
    reuse = cfg.reuse_fac
    s, p = g.stride, g.padding
    # demand depends only on the tile width, which is reuse except for the
    # last tile of a row
    masks = {}

    cycle = 0
    for ofm_group in range(g.ofm_groups):
        for oy in range(g.out_h):
            for t in range(g.tiles_per_row):
                tile = oy * g.tiles_per_row + t
                ox0 = t * reuse
                active = min(reuse, g.out_w - ox0)
                mask = masks.get(active)
                if mask is None:
                    mask = masks[active] = [demanded(dx, active, s, g.c)
                                            for dx in range(g.row_slides)]
                for channel_group in range(g.channel_groups):
                    for ky in range(g.col_slides):
                        row = oy * s - p + ky
                        row_inside = 0 <= row < g.in_h
                        for dx in range(g.row_slides):
                            col = ox0 * s - p + dx
                            fetched = (row_inside and 0 <= col < g.in_w
                                       and mask[dx])
                            yield LoadEvent(cycle, ofm_group, tile,
                                            channel_group, row, col,
                                            not fetched)
                            cycle += 1


ScheduleTotals = namedtuple(
    'ScheduleTotals',
    'vectors_loaded, streamed_bytes, padded_vector_count, offchip_vectors, '
    'bytes_loaded')
ScheduleTotals.__doc__ = """\
vectors_loaded       events, one per cycle
streamed_bytes       vectors_loaded * vec_fac * 4, the bus traffic into the
                     shift-register buffer
padded_vector_count  events that carry synthesized zeros
offchip_vectors      distinct IFM vectors fetched per OFM-group pass
bytes_loaded         offchip_vectors * vec_fac * 4
"""


@dataclass(frozen=True)
class LoadSchedule:
    layer: str
    events: tuple
    totals: ScheduleTotals

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def write_csv(self, stream):
        write_schedule_csv(self.events, stream)


def generate_schedule(layer, cfg, ifm_shape):
    """Materialize the full load schedule of a conv layer with its totals."""
    events = []
    padded = 0
    offchip = 0
    seen, current_group = set(), None
    for event in iter_events(layer, cfg, ifm_shape):
        events.append(event)
        if event.ofm_group != current_group:
            offchip += len(seen)
            seen, current_group = set(), event.ofm_group
        if event.is_padding:
            padded += 1
        else:
            seen.add((event.channel_group, event.row, event.col))
    offchip += len(seen)

    vector_bytes = cfg.vec_fac * WORD_BYTES
    totals = ScheduleTotals(
        vectors_loaded=len(events),
        streamed_bytes=len(events) * vector_bytes,
        padded_vector_count=padded,
        offchip_vectors=offchip,
        bytes_loaded=offchip * vector_bytes)
    logger.debug('Schedule of %s at %s: %s', layer.name, cfg, totals)
    return LoadSchedule(layer.name, tuple(events), totals)


def window_coverage(size, outputs, c, stride, padding):
    """Count input positions inside [0, size) read by at least one of the
    given number of sliding windows."""
    if stride < c:
        # consecutive windows overlap, so the union is one interval
        lo = max(0, -padding)
        hi = min(size, (outputs - 1) * stride - padding + c)
        return max(0, hi - lo)
    return sum(max(0, min(size, o * stride - padding + c)
                   - max(0, o * stride - padding))
               for o in range(outputs))


def ifm_vector_count(layer, cfg, ifm_shape):
    """Closed-form number of distinct IFM vectors fetched off-chip."""
    g = conv_geometry(layer, cfg, ifm_shape)
    rows = window_coverage(g.in_h, g.out_h, g.c, g.stride, g.padding)
    cols = window_coverage(g.in_w, g.out_w, g.c, g.stride, g.padding)
    return g.ofm_groups * g.channel_groups * rows * cols


def ifm_offchip_bytes(layer, cfg, ifm_shape):
    """Off-chip IFM bytes of a conv layer, equal to the schedule's
    bytes_loaded without enumerating it."""
    return ifm_vector_count(layer, cfg, ifm_shape) * cfg.vec_fac * WORD_BYTES


def load_event_count(layer, cfg, ifm_shape):
    """Number of load cycles, equal to len(generate_schedule(...))."""
    g = conv_geometry(layer, cfg, ifm_shape)
    return (g.ofm_groups * g.tiles * g.channel_groups
            * g.row_slides * g.col_slides)


def write_schedule_csv(events, stream):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for event in events:
        writer.writerow(event[:-1] + (int(event.is_padding),))
