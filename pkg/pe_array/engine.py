"""Event-driven simulation of the 1-D systolic PE array.

The array has pe_num PEs. Each PE caches the c x c x ic_dim weights of one
output feature map and owns reuse_fac IP units; every IP unit multiplies
vec_fac IFM channels against vec_fac weights per cycle, reduces the products
with a balanced adder tree and folds the result into its accumulator.

Conv layers are driven by the MemRD load schedule: the vectors of one
(ofm_group, tile, channel_group) block fill the shift-register IFM buffer,
after which all PEs run the c x c kernel positions against it. Values are
single precision throughout.
"""

from collections import namedtuple
from dataclasses import asdict, dataclass, fields
from itertools import groupby
import logging
from math import ceil, log2

import numpy as np

from arch_core.config import WORD_BYTES, validate_arch
from arch_core.errors import ShapeError
from arch_core.tensor import Tensor
from memrd.schedule import conv_geometry, iter_events


logger = logging.getLogger(__name__)


class BatchSizeError(ValueError):
    pass


@dataclass(frozen=True)
class CycleStats:
    total_cycles: int = 0
    load_cycles: int = 0
    compute_cycles: int = 0
    drain_cycles: int = 0
    weight_cycles: int = 0
    macs_performed: int = 0
    ifm_bytes: int = 0
    weight_bytes: int = 0
    ofm_bytes: int = 0

    def as_dict(self):
        return asdict(self)

    def __add__(self, other):
        return CycleStats(**{f.name: getattr(self, f.name)
                             + getattr(other, f.name)
                             for f in fields(self)})


def drain_cycles(vec_fac):
    """Pipeline flush after the last partial IP: adder-tree depth + 1."""
    return ceil(log2(vec_fac)) + 1


def _finish(counters, vec_fac):
    drain = drain_cycles(vec_fac)
    counters['drain_cycles'] = drain
    counters['total_cycles'] = (counters['weight_cycles']
                                + max(counters['load_cycles'],
                                      counters['compute_cycles'])
                                + drain)
    return CycleStats(**counters)


def adder_tree(products):
    """Sum the last axis with a balanced pairwise tree.

    Lanes are zero-padded to a power of two, then adjacent pairs are added
    level by level, so the summation order depends only on the lane count.
    """
    x = np.asarray(products)
    width = x.shape[-1]
    size = 1 << (width - 1).bit_length()
    if size != width:
        pad = [(0, 0)] * (x.ndim - 1) + [(0, size - width)]
        x = np.pad(x, pad)
    while x.shape[-1] > 1:
        x = x[..., 0::2] + x[..., 1::2]
    return x[..., 0]


class IPUnit:
    """One inner-product unit; a view on its PE's accumulator."""

    __slots__ = ('_array', 'pe', 'index')

    def __init__(self, array, pe, index):
        self._array = array
        self.pe = pe
        self.index = index

    @property
    def accumulator(self):
        return self._array.accumulators[self.pe, self.index]


class ProcessingElement:
    """A view on PE n of a SystolicArray."""

    __slots__ = ('_array', 'index')

    def __init__(self, array, index):
        self._array = array
        self.index = index

    @property
    def ofm(self):
        """Index of the output feature map whose weights are cached, or None
        while idle."""
        ofm = self._array.ofms[self.index]
        return None if ofm < 0 else int(ofm)

    @property
    def weight_cache(self):
        return self._array.weights[self.index]

    @property
    def ip_units(self):
        return [IPUnit(self._array, self.index, r)
                for r in range(self._array.cfg.reuse_fac)]

    @property
    def shift_out(self):
        return self._array.shift_regs[self.index]

    def drain(self, bias, count):
        """Sums of the first count IP units plus the bias of this PE's OFM."""
        return (np.array([unit.accumulator for unit in self.ip_units[:count]],
                         dtype=np.float32) + np.float32(bias))


class SystolicArray:
    """State of all PEs: weight caches, accumulators and the shift chain.

    The weight cache of every PE is ic_lanes x c x c, where ic_lanes is
    ic_dim rounded up to whole vec_fac groups; unused lanes hold zeros.
    """

    def __init__(self, cfg, ic_lanes, kernel_size=1):
        self.cfg = cfg
        self.kernel_size = kernel_size
        self.weights = np.zeros((cfg.pe_num, ic_lanes, kernel_size,
                                 kernel_size), dtype=np.float32)
        self.ofms = np.full(cfg.pe_num, -1)
        self.accumulators = np.zeros((cfg.pe_num, cfg.reuse_fac),
                                     dtype=np.float32)
        self.shift_regs = [None] * cfg.pe_num

    def pe(self, n):
        return ProcessingElement(self, n)

    @property
    def pes(self):
        return [self.pe(n) for n in range(self.cfg.pe_num)]

    def load_weights(self, first_ofm, weights):
        """Preload the weights of consecutive OFMs, one PE after another.

        Returns the number of cycles taken: each PE streams its ic x c x c
        weights vec_fac words per cycle.
        """
        active, ic = weights.shape[:2]
        self.weights[:] = 0
        self.weights[:active, :ic] = weights
        self.ofms[:] = -1
        self.ofms[:active] = np.arange(first_ofm, first_ofm + active)
        per_pe = ceil(ic * self.kernel_size ** 2 / self.cfg.vec_fac)
        return active * per_pe

    def reset_accumulators(self):
        self.accumulators[:] = 0

    def accumulate(self, weights, ifm):
        """One cycle of every IP unit.

        weights is (pe_num, vec_fac), ifm is (reuse_fac, vec_fac): IP unit r
        of PE n adds the inner product of weights[n] and ifm[r].
        """
        self.accumulators += adder_tree(weights[:, None, :] * ifm[None, :, :])

    def run_block(self, window, channel_group, stride):
        """Run all kernel positions against a filled IFM buffer window.

        window is (c, row_slides, vec_fac); IP unit r reads the row offset
        r * stride + kx. Returns the compute cycles spent.
        """
        c, vec = self.kernel_size, self.cfg.vec_fac
        lanes = slice(channel_group * vec, (channel_group + 1) * vec)
        span = stride * (self.cfg.reuse_fac - 1) + 1
        for ky in range(c):
            for kx in range(c):
                self.accumulate(self.weights[:, lanes, ky, kx],
                                window[ky, kx:kx + span:stride])
        return c * c

    def shift(self, payload):
        """Advance the inter-PE chain one cycle; PE 0 takes payload."""
        self.shift_regs[1:] = self.shift_regs[:-1]
        self.shift_regs[0] = payload
        return self.shift_regs


def _check_conv_operands(ifm, weights, bias, layer):
    op_dim, ic_dim, c = (layer.out_channels, layer.in_channels,
                         layer.kernel_size)
    if weights.shape != (op_dim, ic_dim, c, c):
        raise ShapeError(f"weights shaped {weights.shape}, expected "
                         f"{(op_dim, ic_dim, c, c)}", layer.name)
    if bias.shape != (op_dim,):
        raise ShapeError(f"bias shaped {bias.shape}, expected {(op_dim,)}",
                         layer.name)
    if ifm.ndim != 3 or ifm.shape[0] != ic_dim * layer.groups:
        raise ShapeError(f"IFM shaped {ifm.shape}, expected "
                         f"{ic_dim * layer.groups} channels", layer.name)


def simulate_conv(ifm, weights, bias, layer, cfg):
    """Run a conv layer through the array; return (Tensor, CycleStats).

    The fused ReLU of the layer is applied to the drained outputs.
    """
    validate_arch(cfg)
    x = np.asarray(ifm.data if isinstance(ifm, Tensor) else ifm,
                   dtype=np.float32)
    w = np.asarray(weights, dtype=np.float32)
    b = np.asarray(bias, dtype=np.float32)
    _check_conv_operands(x, w, b, layer)

    g = conv_geometry(layer, cfg, x.shape)
    pe, vec, reuse = cfg.pe_num, cfg.vec_fac, cfg.reuse_fac
    array = SystolicArray(cfg, g.channel_groups * vec, g.c)
    out = np.zeros((layer.out_channels, g.out_h, g.out_w), dtype=np.float32)
    counters = dict.fromkeys(('load_cycles', 'compute_cycles',
                              'weight_cycles', 'macs_performed', 'ifm_bytes',
                              'weight_bytes', 'ofm_bytes'), 0)

    current_group = None
    events = iter_events(layer, cfg, x.shape)
    block_key = lambda e: (e.ofm_group, e.tile, e.channel_group)
    for (ofm_group, tile, cg), block in groupby(events, block_key):
        if ofm_group != current_group:
            current_group = ofm_group
            conv_group, local = divmod(ofm_group, g.ofm_groups_per_conv_group)
            first = conv_group * g.op_per_group + local * pe
            active_pe = min(pe, g.op_per_group - local * pe)
            first_channel = conv_group * g.ic_dim
            counters['weight_cycles'] += array.load_weights(
                first, w[first:first + active_pe])
            counters['weight_bytes'] += w[0].size * active_pe * WORD_BYTES
            fetched = set()

        lanes = min(vec, g.ic_dim - cg * vec)
        channels = slice(first_channel + cg * vec,
                         first_channel + cg * vec + lanes)
        window = np.zeros((g.c, g.row_slides, vec), dtype=np.float32)
        for i, event in enumerate(block):
            counters['load_cycles'] += 1
            if event.is_padding:
                continue
            ky, dx = divmod(i, g.row_slides)
            window[ky, dx, :lanes] = x[channels, event.row, event.col]
            if (cg, event.row, event.col) not in fetched:
                fetched.add((cg, event.row, event.col))
                counters['ifm_bytes'] += vec * WORD_BYTES

        if cg == 0:
            array.reset_accumulators()
        counters['compute_cycles'] += array.run_block(window, cg, g.stride)

        oy, t = divmod(tile, g.tiles_per_row)
        ox0 = t * reuse
        active = min(reuse, g.out_w - ox0)
        counters['macs_performed'] += active_pe * active * lanes * g.c * g.c

        if cg == g.channel_groups - 1:
            for element in array.pes[:active_pe]:
                out[element.ofm, oy, ox0:ox0 + active] = element.drain(
                    b[element.ofm], active)
            counters['ofm_bytes'] += active_pe * active * WORD_BYTES

    if layer.apply_relu:
        out = np.maximum(out, np.float32(0))
    stats = _finish(counters, vec)
    logger.debug('Simulated %s at %s: %s', layer.name, cfg, stats)
    return Tensor(out), stats


def simulate_fc(inputs, weights, bias, cfg, batch=None, apply_relu=False):
    """Run an FC layer in batch mode; return ((batch, op_dim) array,
    CycleStats).

    IP unit r of every PE works on image r of the batch, so all images share
    each weight fetched.
    """
    validate_arch(cfg)
    x = np.asarray(inputs, dtype=np.float32)
    if x.ndim == 1:
        x = x[None, :]
    x = x.reshape(x.shape[0], -1)
    batch = x.shape[0] if batch is None else batch
    if batch != x.shape[0]:
        raise ShapeError(f"batch of {batch} declared, {x.shape[0]} images "
                         'given')
    if batch > cfg.reuse_fac:
        raise BatchSizeError(f"batch size must be <= reuse_fac "
                             f"({batch} > {cfg.reuse_fac})")
    w = np.asarray(weights, dtype=np.float32)
    b = np.asarray(bias, dtype=np.float32)
    if w.ndim != 2 or w.shape[1] != x.shape[1]:
        raise ShapeError(f"weights shaped {w.shape} do not accept "
                         f"{x.shape[1]} inputs")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shaped {b.shape}, expected {(w.shape[0],)}")

    op_dim, ic_dim = w.shape
    vec = cfg.vec_fac
    channel_groups = ceil(ic_dim / vec)
    passes = ceil(op_dim / cfg.pe_num)

    # every pass runs the same channel-group sequence, so all passes are
    # folded into one array here
    lanes = channel_groups * vec
    w = np.pad(w, ((0, 0), (0, lanes - ic_dim)))
    x = np.pad(x, ((0, 0), (0, lanes - ic_dim)))
    acc = np.zeros((op_dim, batch), dtype=np.float32)
    for cg in range(channel_groups):
        group = slice(cg * vec, (cg + 1) * vec)
        acc += adder_tree(w[:, None, group] * x[None, :, group])
    out = (acc + b[:, None]).T
    if apply_relu:
        out = np.maximum(out, np.float32(0))

    cycles = passes * channel_groups
    stats = _finish({
        'load_cycles': cycles,
        'compute_cycles': cycles,
        'weight_cycles': op_dim * channel_groups,
        'macs_performed': op_dim * ic_dim * batch,
        'ifm_bytes': passes * batch * channel_groups * vec * WORD_BYTES,
        'weight_bytes': op_dim * ic_dim * WORD_BYTES,
        'ofm_bytes': op_dim * batch * WORD_BYTES,
    }, vec)
    logger.debug('Simulated fc %sx%s batch %s at %s: %s', op_dim, ic_dim,
                 batch, cfg, stats)
    return out, stats


ShiftArrival = namedtuple('ShiftArrival', 'cycle, event')


def shift_trace(cfg, schedule):
    """Log when each PE sees each scheduled vector.

    Returns one list of ShiftArrivals per PE. PE 0 sees the vector of a load
    event in the event's cycle and every further PE one cycle later than its
    predecessor.
    """
    events = list(schedule)
    array = SystolicArray(cfg, 0)
    arrivals = [[] for _ in range(cfg.pe_num)]
    for cycle in range(len(events) + cfg.pe_num - 1):
        incoming = events[cycle] if cycle < len(events) else None
        array.shift(incoming)
        for element in array.pes:
            if element.shift_out is not None:
                arrivals[element.index].append(
                    ShiftArrival(cycle, element.shift_out))
    return arrivals
