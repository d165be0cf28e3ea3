"""JSON and CSV report writers shared by the commands and the API."""

import json

from django.core.serializers.json import DjangoJSONEncoder

from arch_core.layers import flop_count, infer_shapes, layer_flops


def to_json(report):
    """Serialize a report dict; equal reports give byte-identical text."""
    return json.dumps(report, cls=DjangoJSONEncoder, sort_keys=True,
                      indent=2)


def flops_report(model):
    shapes = infer_shapes(model)
    per_layer = layer_flops(model)
    total = flop_count(model)
    return {'model': model.name,
            'input_shape': list(model.input_shape),
            'flops': total,
            'gflops': total / 1e9,
            'layers': [{'name': layer.name, 'kind': str(layer.kind),
                        'shape': list(shapes[layer.name]),
                        'flops': per_layer[layer.name]}
                       for layer in model.layers]}


def exploration_report(model, fpga, exploration):
    return {'model': model.name,
            'fpga': fpga.name,
            'profile_note': fpga.profile_note or None,
            'chosen': exploration.cfg.as_dict(),
            'sweeps': [sweep.as_dict() for sweep in exploration[1:]]}


def validation_report(model=None, cfg=None, fpga=None, errors=None):
    return {'valid': not errors,
            'model': model.name if model else None,
            'cfg': cfg.as_dict() if cfg else None,
            'fpga': fpga.name if fpga else None,
            'errors': errors or {}}
