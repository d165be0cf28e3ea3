"""Closed-form latency, bandwidth and resource model.

Every layer runs on its own, one after another. A layer takes as long as the
slowest of its three activities: computing, streaming the IFM into the PE
array, and fetching its weights from off-chip memory.
"""

from dataclasses import asdict, dataclass
import logging
from math import ceil

from django.db.models import TextChoices

from arch_core.config import WORD_BYTES, validate_arch
from arch_core.layers import LayerKind, infer_shapes, input_shapes
from aux_kernels.kernels import aux_cycles
from memrd.schedule import conv_geometry, load_event_count
from pe_array.engine import BatchSizeError


logger = logging.getLogger(__name__)

UTILIZATION_SLACK = 1e-9


class Bound(TextChoices):
    COMPUTE = 'compute', 'Compute bound'
    IFM_LOAD = 'ifm_load', 'IFM load bound'
    WEIGHT_MEMORY = 'weight_memory', 'Weight memory bound'


@dataclass(frozen=True)
class LayerLatency:
    name: str
    kind: str
    compute_cycles: int
    load_cycles: int
    weight_cycles: int
    bound: str
    seconds: float

    @property
    def cycles(self):
        return max(self.compute_cycles, self.load_cycles, self.weight_cycles)

    def as_dict(self):
        return {'name': self.name,
                'kind': str(self.kind),
                'bound': str(self.bound),
                'cycles': self.cycles,
                'compute_cycles': self.compute_cycles,
                'load_cycles': self.load_cycles,
                'weight_cycles': self.weight_cycles,
                'seconds': self.seconds}


def _latency(name, kind, compute, load, weight, fpga):
    # ties go to the earlier activity in this order
    bound = max(((compute, Bound.COMPUTE), (load, Bound.IFM_LOAD),
                 (weight, Bound.WEIGHT_MEMORY)),
                key=lambda item: item[0])[1]
    return LayerLatency(name=name, kind=kind, compute_cycles=compute,
                        load_cycles=load, weight_cycles=weight, bound=bound,
                        seconds=max(compute, load, weight) / fpga.f_clk_hz)


def _memory_cycles(num_bytes, fpga):
    return ceil(num_bytes / fpga.bytes_per_cycle())


def conv_cycles(layer, cfg, ifm_shape):
    """Return (compute_cycles, load_cycles) of a conv layer.

    These equal the compute and load counters of the event-driven simulator.
    """
    g = conv_geometry(layer, cfg, ifm_shape)
    compute = g.ofm_groups * g.tiles * g.channel_groups * g.c * g.c
    return compute, load_event_count(layer, cfg, ifm_shape)


def conv_latency(layer, cfg, fpga, ifm_shape):
    compute, events = conv_cycles(layer, cfg, ifm_shape)
    streamed = events * cfg.vec_fac * WORD_BYTES
    load = max(events, _memory_cycles(streamed, fpga))
    weight_bytes = (layer.out_channels * layer.in_channels
                    * layer.kernel_size ** 2 * WORD_BYTES)
    return _latency(layer.name, layer.kind, compute, load,
                    _memory_cycles(weight_bytes, fpga), fpga)


def fc_latency(layer, cfg, fpga, batch=1):
    """Latency of an FC layer in batch mode.

    The weights fetched for one pass serve every image of the batch, so the
    weight traffic charged per image shrinks by the batch size.
    """
    validate_arch(cfg)
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if batch > cfg.reuse_fac:
        raise BatchSizeError(f"batch size must be <= reuse_fac "
                             f"({batch} > {cfg.reuse_fac})")
    op_dim, ic_dim = layer.out_channels, layer.in_channels
    compute = ceil(op_dim / cfg.pe_num) * ceil(ic_dim / cfg.vec_fac)
    weight = _memory_cycles(op_dim * ic_dim * WORD_BYTES / batch, fpga)
    return _latency(layer.name, layer.kind, compute, compute, weight, fpga)


def aux_latency(layer, out_shape, cfg, fpga):
    cycles = aux_cycles(out_shape, cfg.vec_fac)
    return _latency(layer.name, layer.kind, cycles, 0, 0, fpga)


def layer_latency(layer, cfg, fpga, ifm_shape, out_shape, batch=1):
    if layer.kind == LayerKind.CONV:
        return conv_latency(layer, cfg, fpga, ifm_shape)
    if layer.kind == LayerKind.FC:
        return fc_latency(layer, cfg, fpga, batch)
    return aux_latency(layer, out_shape, cfg, fpga)


@dataclass(frozen=True)
class ResourceReport:
    dsp_used: float
    dsp_count: int
    dsp_utilization: float
    peak_gflops: float
    measured_efficiency: tuple = None

    @property
    def feasible(self):
        return self.dsp_utilization <= 1 + UTILIZATION_SLACK

    def as_dict(self):
        report = asdict(self)
        report['feasible'] = self.feasible
        # utilization above 100% is reported as 100% and flagged infeasible
        report['dsp_utilization'] = min(self.dsp_utilization, 1.0)
        return report


def dsp_usage(cfg, fpga):
    """DSP blocks and peak throughput of a configuration on a board.

    Every IP unit costs vec_fac lanes of dsp_per_lane blocks plus a fixed
    adder-tree and accumulator overhead.
    """
    validate_arch(cfg)
    ip_units = cfg.pe_num * cfg.reuse_fac
    dsp_used = ip_units * (cfg.vec_fac * fpga.dsp_per_lane
                           + fpga.dsp_overhead_per_ip_unit)
    peak = 2 * cfg.total_parallelism() * fpga.f_clk_hz / 1e9
    efficiency = None
    if fpga.measured_gflops:
        efficiency = tuple(g / peak for g in fpga.measured_gflops)
    return ResourceReport(dsp_used=dsp_used, dsp_count=fpga.dsp_count,
                          dsp_utilization=dsp_used / fpga.dsp_count,
                          peak_gflops=peak, measured_efficiency=efficiency)


@dataclass(frozen=True)
class ModelLatency:
    model: str
    layers: tuple
    resources: ResourceReport
    batch: int

    @property
    def total_seconds(self):
        return sum(layer.seconds for layer in self.layers)

    def seconds_of(self, kind):
        return sum(layer.seconds for layer in self.layers
                   if layer.kind == kind)

    def layer(self, name):
        for latency in self.layers:
            if latency.name == name:
                return latency
        raise KeyError(name)

    def as_dict(self):
        return {'model': self.model,
                'batch': self.batch,
                'layers': [layer.as_dict() for layer in self.layers],
                'total_seconds': self.total_seconds,
                'total_cycles': sum(layer.cycles for layer in self.layers),
                'resources': self.resources.as_dict()}


def model_latency(model, cfg, fpga, batch=1):
    """Latency of every layer of model, run back to back."""
    validate_arch(cfg)
    out_shapes = infer_shapes(model)
    in_shapes = input_shapes(model)
    layers = tuple(layer_latency(layer, cfg, fpga, in_shapes[layer.name],
                                 out_shapes[layer.name], batch)
                   for layer in model.layers)
    result = ModelLatency(model.name, layers, dsp_usage(cfg, fpga), batch)
    logger.info('Modeled %s at %s on %s: %.6f s', model.name, cfg, fpga,
                result.total_seconds)
    return result
