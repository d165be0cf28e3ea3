"""Model descriptor and board description files.

A model descriptor is a JSON object:

    {"name": "alexnet_toy",
     "input_shape": [3, 19, 19],
     "layers": [{"name": "conv1", "type": "conv", "inputs": ["input"],
                 "out_channels": 8, "in_channels": 3, "kernel_size": 3,
                 "stride": 2, "padding": 0, "groups": 1, "relu": true},
                ...]}

Layer objects carry the parameters of their type under the attribute names
of LayerDescriptor; "inputs" defaults to the model input and "relu" to false.

Both kinds of file can be named by path or, for bundled files, by stem
("alexnet", "arria10").
"""

import json
import logging
from pathlib import Path

from django.conf import settings
from django.core.exceptions import ValidationError

from arch_core.config import FpgaSpec
from arch_core.layers import (INPUT, LRN_DEFAULTS, LayerDescriptor,
                              LayerKind, ModelDescriptor, validate_model)


logger = logging.getLogger(__name__)


class DescriptorError(ValueError):
    """A descriptor file cannot be read or parsed."""


_LAYER_PARAMS = {
    LayerKind.CONV.value: {'out_channels': None, 'in_channels': None,
                           'kernel_size': None, 'stride': 1, 'padding': 0,
                           'groups': 1},
    LayerKind.FC.value: {'out_channels': None, 'in_channels': None},
    LayerKind.MAXPOOL.value: {'window': None, 'stride': None, 'padding': 0},
    LayerKind.LRN.value: LRN_DEFAULTS,
    LayerKind.ELTWISE.value: {},
    LayerKind.RELU.value: {},
}

_LAYER_KEYS = {'name', 'type', 'inputs', 'relu'}


def resolve(name_or_path, directory):
    """Return the path of a file given by path or by stem in directory."""
    path = Path(name_or_path)
    if path.is_file():
        return path
    stem = str(name_or_path).removesuffix('.json')
    bundled = Path(directory) / f"{stem}.json"
    if bundled.is_file():
        return bundled
    raise FileNotFoundError(f"{name_or_path}: no such file or bundled "
                            'descriptor')


def bundled_names(directory):
    return sorted(path.stem for path in Path(directory).glob('*.json'))


def _read_json(path):
    try:
        with open(path, encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise DescriptorError(f"{path}: line {e.lineno} column {e.colno}: "
                              f"{e.msg}") from e


def _layer_from_dict(index, data, errors):
    where = f"layers[{index}]"
    if not isinstance(data, dict):
        errors.setdefault(where, []).append('Expected an object.')
        return None
    name, kind = data.get('name'), data.get('type')
    if not isinstance(name, str) or not name:
        errors.setdefault(f"{where}.name", []).append(
            'A non-empty string is required.')
        return None
    if kind not in _LAYER_PARAMS:
        errors.setdefault(f"{name}.type", []).append(
            f"Unknown layer type {kind!r}; expected one of "
            f"{', '.join(LayerKind.values)}.")
        return None

    defaults = _LAYER_PARAMS[kind]
    for key in data.keys() - _LAYER_KEYS - defaults.keys():
        errors.setdefault(f"{name}.{key}", []).append(
            f"Not a parameter of {kind} layers.")
    params = {key: data.get(key, default) for key, default in defaults.items()}
    if kind == LayerKind.MAXPOOL and params['stride'] is None:
        params['stride'] = params['window']

    inputs = data.get('inputs', [INPUT])
    if (not isinstance(inputs, list)
            or not all(isinstance(i, str) for i in inputs)):
        errors.setdefault(f"{name}.inputs", []).append(
            'Expected a list of layer names.')
        return None
    relu = data.get('relu', kind == LayerKind.RELU)
    if not isinstance(relu, bool):
        errors.setdefault(f"{name}.relu", []).append('Expected true or false.')
        return None
    return LayerDescriptor(name, LayerKind(kind), inputs, apply_relu=relu,
                           **params)


def model_from_dict(data):
    """Build and validate a ModelDescriptor from its JSON object."""
    if not isinstance(data, dict):
        raise ValidationError('A model descriptor must be a JSON object.')
    errors = {}
    for key in ('name', 'input_shape', 'layers'):
        if key not in data:
            errors[key] = ['This field is required.']
    for key in data.keys() - {'name', 'input_shape', 'layers'}:
        errors[key] = ['Unknown field.']
    if errors:
        raise ValidationError(errors)
    if not isinstance(data['layers'], list):
        raise ValidationError({'layers': ['Expected a list of layers.']})
    if not isinstance(data['input_shape'], list):
        raise ValidationError({'input_shape': ['Expected [C, H, W].']})

    layers = [_layer_from_dict(i, layer, errors)
              for i, layer in enumerate(data['layers'])]
    if errors:
        raise ValidationError(errors)
    return validate_model(ModelDescriptor(str(data['name']),
                                          data['input_shape'], layers))


def model_to_dict(model):
    layers = []
    for layer in model.layers:
        entry = {'name': layer.name, 'type': str(layer.kind),
                 'inputs': list(layer.inputs)}
        entry.update(layer.params())
        entry['relu'] = layer.apply_relu
        layers.append(entry)
    return {'name': model.name, 'input_shape': list(model.input_shape),
            'layers': layers}


def load_model(name_or_path):
    """Read, parse and validate a model descriptor.

    Raises FileNotFoundError, DescriptorError for malformed JSON,
    ValidationError for bad fields and ShapeError for inconsistent shapes.
    """
    path = resolve(name_or_path, settings.MODELS_DIR)
    model = model_from_dict(_read_json(path))
    logger.info('Loaded model %s from %s (%s layers)', model.name, path,
                len(model))
    return model


def dump_model(model, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_dict(model), f, indent=2)
        f.write('\n')


def load_profile(name_or_path):
    """Read a pe_num runtime profile: {"note": ..., "points": [[pe, s]]}."""
    data = _read_json(resolve(name_or_path, settings.FIXTURES_DIR
                              / 'profiles'))
    try:
        points = tuple((int(pe), float(seconds))
                       for pe, seconds in data['points'])
    except (KeyError, TypeError, ValueError) as e:
        raise DescriptorError(f"{name_or_path}: malformed profile") from e
    return points, data.get('note', '')


def load_fpga(name_or_path):
    """Read a board description; a string pe_num_profile names a profile
    file."""
    data = _read_json(resolve(name_or_path, settings.FPGA_DIR))
    if not isinstance(data, dict):
        raise ValidationError('A board description must be a JSON object.')
    if isinstance(data.get('pe_num_profile'), str):
        points, note = load_profile(data['pe_num_profile'])
        data = {**data, 'pe_num_profile': points,
                'profile_note': data.get('profile_note', note)}
    return FpgaSpec.from_dict(data)
