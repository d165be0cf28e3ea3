"""The host side of an inference run.

The host walks the model once in execution order and hands every layer to
the kernel that runs it: conv and fc layers to the PE array, pooling, LRN,
element-wise sums and standalone ReLUs to the auxiliary kernels. Outputs are
kept by layer name so residual branches can pick up any earlier result.
The architecture configuration is never touched; a different model only
means different parameters per layer.
"""

from collections import namedtuple
from dataclasses import dataclass
import hashlib
import logging

import numpy as np
from django.core.exceptions import ValidationError
from django.db.models import TextChoices

from arch_core.config import (ArchConfig, FpgaSpec, validate_arch,
                              validate_integer)
from arch_core.errors import MissingWeightsError, ShapeError
from arch_core.layers import INPUT, LayerKind, infer_shapes
from arch_core.tensor import Tensor
from aux_kernels.kernels import (AuxStats, simulate_lrn, simulate_memwrite,
                                 simulate_pool)
from oracle_ops.reference import model_ref_forward
from pe_array.engine import simulate_conv, simulate_fc
from perf_model.model import model_latency


logger = logging.getLogger(__name__)


class Mode(TextChoices):
    SIMULATE = 'simulate', 'Functional simulation'
    MODEL_ONLY = 'model-only', 'Latency model only'


@dataclass(frozen=True)
class RunOptions:
    cfg: ArchConfig
    fpga: FpgaSpec
    mode: str = Mode.SIMULATE
    batch: int = 1
    seed: int = 0

    def __post_init__(self):
        validate_arch(self.cfg)
        errors = {}
        if self.mode not in Mode.values:
            errors['mode'] = [f"Expected one of {', '.join(Mode.values)}."]
        try:
            validate_integer(self.batch)
            if self.batch < 1:
                errors['batch'] = ['Ensure this value is greater than or '
                                   'equal to 1.']
            elif self.batch > self.cfg.reuse_fac:
                errors['batch'] = [f"Batch size must be <= reuse_fac "
                                   f"({self.batch} > {self.cfg.reuse_fac})."]
        except ValidationError as e:
            errors['batch'] = e.messages
        if errors:
            raise ValidationError(errors)

    def as_dict(self):
        return {'mode': str(self.mode), 'batch': self.batch,
                'seed': self.seed, 'fpga': self.fpga.name,
                'cfg': self.cfg.as_dict()}


LayerRecord = namedtuple('LayerRecord', 'name, kind, shape, checksum, stats, '
                                        'latency')
"""Outcome of one layer: output shape and digest (None in model-only mode),
simulated CycleStats or AuxStats summed over the batch (None in model-only
mode) and the modeled LayerLatency."""


def _stats_dict(stats):
    if stats is None:
        return None
    if isinstance(stats, AuxStats):
        return dict(stats._asdict())
    return stats.as_dict()


def _cycles(stats):
    if isinstance(stats, AuxStats):
        return stats.cycles
    return stats.total_cycles


@dataclass(frozen=True)
class RunReport:
    model: str
    options: RunOptions
    layers: tuple
    outputs: dict = None

    def layer(self, name):
        for record in self.layers:
            if record.name == name:
                return record
        raise KeyError(name)

    @property
    def final_outputs(self):
        """The last layer's output for every image of the batch."""
        return self.outputs[self.layers[-1].name]

    @property
    def total_seconds(self):
        return sum(record.latency.seconds for record in self.layers)

    @property
    def simulated_cycles(self):
        if self.options.mode != Mode.SIMULATE:
            return None
        return sum(_cycles(record.stats) for record in self.layers)

    def as_dict(self):
        return {
            'model': self.model,
            'options': self.options.as_dict(),
            'layers': [{'name': record.name,
                        'kind': str(record.kind),
                        'shape': list(record.shape),
                        'checksum': record.checksum,
                        'stats': _stats_dict(record.stats),
                        'latency': record.latency.as_dict()}
                       for record in self.layers],
            'totals': {'modeled_seconds': self.total_seconds,
                       'modeled_cycles': sum(record.latency.cycles
                                             for record in self.layers),
                       'simulated_cycles': self.simulated_cycles},
        }


def synthetic_inputs(shape, batch=1, seed=0):
    """Seeded uniform(-1, 1) input images, independent of the weight
    stream drawn from the same seed."""
    rng = np.random.default_rng([seed, 1])
    return [Tensor(rng.uniform(-1, 1, shape).astype(np.float32))
            for _ in range(batch)]


def digest(tensors):
    if len(tensors) == 1:
        return tensors[0].checksum()
    joined = ''.join(tensor.checksum() for tensor in tensors)
    return hashlib.sha256(joined.encode('ascii')).hexdigest()[:16]


def _sum_stats(stats):
    if isinstance(stats[0], AuxStats):
        return AuxStats(*map(sum, zip(*stats)))
    return sum(stats[1:], stats[0])


def _weights_of(weights, layer):
    try:
        return weights[layer.name]
    except KeyError:
        raise MissingWeightsError(layer.name) from None


def run_layer(layer, sources, weights, cfg):
    """Run one layer over the batch; return (outputs, stats).

    sources holds, per producer of layer, the batch of its output Tensors.
    """
    lanes = cfg.vec_fac
    images = sources[0]

    if layer.kind == LayerKind.CONV:
        w, b = _weights_of(weights, layer)
        results = [simulate_conv(x, w, b, layer, cfg) for x in images]
    elif layer.kind == LayerKind.FC:
        w, b = _weights_of(weights, layer)
        flat = np.stack([x.flat() for x in images])
        out, stats = simulate_fc(flat, w, b, cfg, batch=len(images),
                                 apply_relu=layer.apply_relu)
        return ([Tensor(row.reshape(-1, 1, 1)) for row in out], stats)
    elif layer.kind == LayerKind.MAXPOOL:
        results = [simulate_pool(x, layer, lanes) for x in images]
    elif layer.kind == LayerKind.LRN:
        results = [simulate_lrn(x, layer, lanes) for x in images]
    elif layer.kind == LayerKind.ELTWISE:
        results = [simulate_memwrite(a, b, layer.apply_relu, lanes)
                   for a, b in zip(images, sources[1])]
    else:
        results = [simulate_memwrite(x, apply_relu=True, lanes=lanes)
                   for x in images]

    outputs, stats = zip(*results)
    return list(outputs), _sum_stats(stats)


def _as_batch(inputs):
    if inputs is None:
        return None
    if isinstance(inputs, Tensor) or getattr(inputs, 'ndim', None) == 3:
        inputs = [inputs]
    return [x if isinstance(x, Tensor) else Tensor(x, dtype=np.float32)
            for x in inputs]


def run_inference(model, weights, inputs, opts):
    """Run model through the simulator, or only through the latency model.

    inputs is one Tensor or a list of opts.batch Tensors; weights maps layer
    names to LayerWeights. Both are ignored in model-only mode. Returns a
    RunReport with one record per layer in execution order.
    """
    cfg = opts.cfg
    latencies = model_latency(model, cfg, opts.fpga, opts.batch).layers

    if opts.mode == Mode.MODEL_ONLY:
        shapes = infer_shapes(model)
        records = tuple(LayerRecord(layer.name, layer.kind,
                                    shapes[layer.name], None, None, latency)
                        for layer, latency in zip(model.layers, latencies))
        return RunReport(model.name, opts, records)

    batch = _as_batch(inputs)
    if len(batch) != opts.batch:
        raise ShapeError(f"{len(batch)} input images given for a batch of "
                         f"{opts.batch}")
    for image in batch:
        if image.shape != tuple(model.input_shape):
            raise ShapeError(f"input shaped {image.shape}, model "
                             f"{model.name!r} expects {model.input_shape}")

    activations = {INPUT: batch}
    records = []
    for layer, latency in zip(model.layers, latencies):
        sources = [activations[name] for name in layer.inputs]
        outputs, stats = run_layer(layer, sources, weights, cfg)
        activations[layer.name] = outputs
        records.append(LayerRecord(layer.name, layer.kind, outputs[0].shape,
                                   digest(outputs), stats, latency))
        logger.debug('Ran %s (%s): %s', layer.name, layer.kind, stats)

    del activations[INPUT]
    report = RunReport(model.name, opts, tuple(records), activations)
    logger.info('Ran %s on %s at %s: %s simulated cycles', model.name,
                opts.fpga, cfg, report.simulated_cycles)
    return report


def reference_mismatches(report, model, weights, inputs, rtol=1e-3,
                         atol=1e-5):
    """Compare every layer of a simulate-mode report with the double
    precision reference; return the names of layers that disagree."""
    mismatched = []
    for index, image in enumerate(_as_batch(inputs)):
        expected = model_ref_forward(model, image, weights)
        for name, reference in expected.items():
            actual = report.outputs[name][index].data
            if not np.allclose(actual, reference.data, rtol=rtol, atol=atol):
                if name not in mismatched:
                    mismatched.append(name)
    return mismatched
