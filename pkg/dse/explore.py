"""Three-step design space exploration.

The architectural parameters are picked one at a time, each step fixing the
parameter the next one depends on:

1. vec_fac from the off-chip burst width, so one IFM vector arrives per cycle
2. pe_num from a sweep of the FC layers' runtime at reuse_fac = 1
3. reuse_fac as the largest value whose DSP cost fits on the board
"""

from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass
import logging

from django.conf import settings

from arch_core.config import DATA_BITS, ArchConfig
from arch_core.layers import LayerKind, input_shapes
from perf_model.model import (UTILIZATION_SLACK, Bound, conv_latency,
                              dsp_usage, fc_latency, model_latency)


logger = logging.getLogger(__name__)

PE_NUM_VALUES = range(2, 21, 2)
REUSE_FAC_VALUES = range(1, 33)

# smallest relative runtime gain that justifies the next pe_num step
KNEE_GAIN = 0.05


class InfeasibleDesign(ValueError):
    pass


SweepPoint = namedtuple('SweepPoint', 'value, seconds, dsp_utilization, bound')


@dataclass(frozen=True)
class SweepResult:
    parameter: str
    points: tuple
    chosen: int
    rule: str

    def __post_init__(self):
        object.__setattr__(self, 'points', tuple(self.points))
        if self.chosen not in [p.value for p in self.points]:
            raise ValueError(f"chosen {self.parameter} {self.chosen} is not "
                             'one of the swept points')

    @property
    def chosen_point(self):
        return next(p for p in self.points if p.value == self.chosen)

    def as_dict(self):
        return {'parameter': self.parameter,
                'chosen': self.chosen,
                'rule': self.rule,
                'points': [dict(p._asdict(), bound=p.bound and str(p.bound))
                           for p in self.points]}


def _map(fn, values, threads=None):
    """Evaluate fn over values, concurrently when allowed, in value order."""
    if threads is None:
        threads = getattr(settings, 'SCNN_THREADS', 0)
    if threads <= 0:
        return [fn(value) for value in values]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, values))


def select_vec_fac(fpga):
    """One data word per lane of the off-chip burst."""
    return fpga.burst_width_bits // DATA_BITS


def vec_fac_sweep(fpga):
    vec_fac = select_vec_fac(fpga)
    return SweepResult(
        'vec_fac', [SweepPoint(vec_fac, None, None, None)], vec_fac,
        f"burst width {fpga.burst_width_bits} bits / {DATA_BITS}-bit data")


def _slowest_bound(latencies):
    return max(latencies, key=lambda latency: latency.seconds).bound


def knee(points):
    """Walk points by increasing value and stop where more is not better.

    A point is chosen when it is already memory bound, when the next point is
    memory bound, or when the next point improves runtime by less than
    KNEE_GAIN; otherwise the walk goes on to the last point.
    """
    for point, following in zip(points, points[1:]):
        if point.bound == Bound.WEIGHT_MEMORY:
            return point.value
        if following.bound == Bound.WEIGHT_MEMORY:
            return point.value
        if following.seconds > (1 - KNEE_GAIN) * point.seconds:
            return point.value
    return points[-1].value


def pe_num_layers(model):
    """The layers whose runtime drives pe_num: the FC layers, or the conv
    layers of models without any."""
    fc = [layer for layer in model.layers if layer.kind == LayerKind.FC]
    if fc:
        return fc
    return [layer for layer in model.layers if layer.kind == LayerKind.CONV]


def sweep_pe_num(model, fpga, vec_fac, values=PE_NUM_VALUES, threads=None):
    values = sorted(values)
    if not values:
        raise ValueError('pe_num sweep needs at least one value')

    if fpga.pe_num_profile:
        profile = dict(fpga.pe_num_profile)
        missing = [pe for pe in values if pe not in profile]
        if missing:
            raise ValueError(f"{fpga.name} runtime profile has no point for "
                             f"pe_num {missing}")
        fastest = min(values, key=lambda pe: profile[pe])
        points = [SweepPoint(pe, profile[pe],
                             dsp_usage(ArchConfig(pe, vec_fac, 1),
                                       fpga).dsp_utilization,
                             Bound.WEIGHT_MEMORY if pe > fastest
                             else Bound.COMPUTE)
                  for pe in values]
        rule = (f"knee of the {fpga.name} runtime profile; runtime rising "
                'past its minimum marks memory-bound points')
    else:
        layers = pe_num_layers(model)
        if not layers:
            raise ValueError(f"model {model.name!r} has no conv or fc layers "
                             'to size pe_num by')
        shapes = input_shapes(model)

        def evaluate(pe):
            cfg = ArchConfig(pe, vec_fac, 1)
            latencies = [fc_latency(layer, cfg, fpga)
                         if layer.kind == LayerKind.FC else
                         conv_latency(layer, cfg, fpga, shapes[layer.name])
                         for layer in layers]
            return SweepPoint(pe, sum(lat.seconds for lat in latencies),
                              dsp_usage(cfg, fpga).dsp_utilization,
                              _slowest_bound(latencies))

        points = _map(evaluate, values, threads)
        rule = (f"knee of the modeled {layers[0].kind} layer runtime at "
                "reuse_fac 1: stop at a memory-bound point or a gain below "
                f"{KNEE_GAIN:.0%}")

    chosen = knee(points)
    logger.info('Chose pe_num %s for %s on %s', chosen, model.name, fpga)
    return SweepResult('pe_num', points, chosen, rule)


def sweep_reuse_fac(model, fpga, vec_fac, pe_num, values=REUSE_FAC_VALUES,
                    threads=None):
    values = sorted(values)
    if not values:
        raise ValueError('reuse_fac sweep needs at least one value')

    def evaluate(reuse):
        cfg = ArchConfig(pe_num, vec_fac, reuse)
        latency = model_latency(model, cfg, fpga)
        return SweepPoint(reuse, latency.total_seconds,
                          latency.resources.dsp_utilization,
                          _slowest_bound(latency.layers))

    points = _map(evaluate, values, threads)
    feasible = [p.value for p in points
                if p.dsp_utilization <= 1 + UTILIZATION_SLACK]
    if not feasible:
        needed = dsp_usage(ArchConfig(pe_num, vec_fac, values[0]), fpga)
        raise InfeasibleDesign(
            f"{fpga.name} has {fpga.dsp_count} DSP blocks but pe_num={pe_num}"
            f", vec_fac={vec_fac}, reuse_fac={values[0]} needs "
            f"{needed.dsp_used:g}")
    chosen = max(feasible)
    logger.info('Chose reuse_fac %s for %s on %s', chosen, model.name, fpga)
    return SweepResult('reuse_fac', points, chosen,
                       'largest reuse_fac within the DSP budget')


Exploration = namedtuple('Exploration', 'cfg, vec_fac, pe_num, reuse_fac')


def explore(model, fpga, pe_values=PE_NUM_VALUES,
            reuse_values=REUSE_FAC_VALUES, threads=None):
    """Pick vec_fac, then pe_num, then reuse_fac for model on fpga."""
    vec = vec_fac_sweep(fpga)
    pe = sweep_pe_num(model, fpga, vec.chosen, pe_values, threads)
    reuse = sweep_reuse_fac(model, fpga, vec.chosen, pe.chosen, reuse_values,
                            threads)
    cfg = ArchConfig(pe.chosen, vec.chosen, reuse.chosen)
    logger.info('Explored %s on %s: %s', model.name, fpga, cfg)
    return Exploration(cfg, vec, pe, reuse)


DSE_CSV_COLUMNS = ('parameter', 'value', 'seconds', 'dsp_utilization',
                   'bound', 'chosen')


def write_dse_csv(exploration, stream):
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(DSE_CSV_COLUMNS)
    for sweep in exploration[1:]:
        for point in sweep.points:
            writer.writerow([
                sweep.parameter, point.value,
                '' if point.seconds is None else f"{point.seconds:.9g}",
                '' if point.dsp_utilization is None
                else f"{point.dsp_utilization:.6f}",
                '' if point.bound is None else str(point.bound),
                int(point.value == sweep.chosen)])
