"""Layer and model descriptors, shape inference and FLOP counting.

A model is an ordered list of layers forming a DAG through each layer's
`inputs`, which name earlier layers or the model input (INPUT). Residual
connections are eltwise layers with two producers.
"""

from dataclasses import dataclass, replace

from django.core.exceptions import ValidationError
from django.core.validators import MinValueValidator
from django.db.models import TextChoices

from .config import run_validators, validate_integer, validate_number
from .errors import ShapeError


INPUT = 'input'
"""Producer name that refers to the model input."""


class LayerKind(TextChoices):
    CONV = 'conv', 'Convolution'
    FC = 'fc', 'Fully connected'
    MAXPOOL = 'maxpool', 'Max pooling'
    LRN = 'lrn', 'Local response normalization'
    ELTWISE = 'eltwise', 'Element-wise sum'
    RELU = 'relu', 'Rectified linear unit'


# AlexNet-standard local response normalization
LRN_DEFAULTS = {'local_size': 5, 'alpha': 1e-4, 'beta': 0.75, 'k': 2.0}

_PARAMS = ('out_channels', 'in_channels', 'kernel_size', 'stride', 'padding',
           'groups', 'window', 'local_size', 'alpha', 'beta', 'k')

_REQUIRED = {
    LayerKind.CONV.value: {'out_channels', 'in_channels', 'kernel_size',
                           'stride', 'padding', 'groups'},
    LayerKind.FC.value: {'out_channels', 'in_channels'},
    LayerKind.MAXPOOL.value: {'window', 'stride', 'padding'},
    LayerKind.LRN.value: {'local_size', 'alpha', 'beta', 'k'},
    LayerKind.ELTWISE.value: set(),
    LayerKind.RELU.value: set(),
}

_ARITY = {LayerKind.ELTWISE.value: 2}

_FUSABLE_RELU = {LayerKind.CONV.value, LayerKind.FC.value,
                 LayerKind.ELTWISE.value, LayerKind.RELU.value}


def _odd(value):
    if isinstance(value, int) and value % 2 == 0:
        raise ValidationError(f"Ensure this value is odd (got {value}).")


_PARAM_VALIDATORS = {
    'out_channels': [validate_integer, MinValueValidator(1)],
    'in_channels': [validate_integer, MinValueValidator(1)],
    'kernel_size': [validate_integer, MinValueValidator(1)],
    'stride': [validate_integer, MinValueValidator(1)],
    'padding': [validate_integer, MinValueValidator(0)],
    'groups': [validate_integer, MinValueValidator(1)],
    'window': [validate_integer, MinValueValidator(1)],
    'local_size': [validate_integer, MinValueValidator(1), _odd],
    'alpha': [validate_number, MinValueValidator(0)],
    'beta': [validate_number, MinValueValidator(0)],
    'k': [validate_number],
}


@dataclass(frozen=True)
class LayerDescriptor:
    """One layer of a model.

    Parameters that do not apply to a layer's kind are None. Use the
    classmethod constructors to get kind-appropriate defaults.

    For conv layers in_channels is the depth of one filter (ic_dim); a
    grouped convolution reads in_channels * groups IFM channels. For fc
    layers in_channels is the flattened size of the producer's output.
    """

    name: str
    kind: str
    inputs: tuple = (INPUT,)
    out_channels: int = None
    in_channels: int = None
    kernel_size: int = None
    stride: int = None
    padding: int = None
    groups: int = None
    window: int = None
    local_size: int = None
    alpha: float = None
    beta: float = None
    k: float = None
    apply_relu: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'inputs', tuple(self.inputs))

    @classmethod
    def conv(cls, name, inputs, out_channels, in_channels, kernel_size,
             stride=1, padding=0, groups=1, apply_relu=False):
        return cls(name, LayerKind.CONV, inputs,
                   out_channels=out_channels, in_channels=in_channels,
                   kernel_size=kernel_size, stride=stride, padding=padding,
                   groups=groups, apply_relu=apply_relu)

    @classmethod
    def fc(cls, name, inputs, out_channels, in_channels, apply_relu=False):
        return cls(name, LayerKind.FC, inputs,
                   out_channels=out_channels, in_channels=in_channels,
                   apply_relu=apply_relu)

    @classmethod
    def maxpool(cls, name, inputs, window, stride=None, padding=0):
        return cls(name, LayerKind.MAXPOOL, inputs, window=window,
                   stride=window if stride is None else stride,
                   padding=padding)

    @classmethod
    def lrn(cls, name, inputs, **params):
        return cls(name, LayerKind.LRN, inputs, **{**LRN_DEFAULTS, **params})

    @classmethod
    def eltwise(cls, name, inputs, apply_relu=False):
        return cls(name, LayerKind.ELTWISE, inputs, apply_relu=apply_relu)

    @classmethod
    def relu(cls, name, inputs):
        return cls(name, LayerKind.RELU, inputs, apply_relu=True)

    @property
    def is_parameterized(self):
        return self.kind in (LayerKind.CONV, LayerKind.FC)

    def params(self):
        """Return the kind-specific parameters that are set."""
        return {p: getattr(self, p) for p in _PARAMS
                if getattr(self, p) is not None}


def layer_errors(layer):
    """Collect parameter violations of one layer as a field -> messages dict.

    Keys are prefixed with the layer name, so errors of a whole model can be
    merged into one ValidationError.
    """
    prefix = f"{layer.name}."
    errors = {}

    def add(field, message):
        errors.setdefault(prefix + field, []).append(message)

    if layer.kind not in LayerKind.values:
        add('kind', f"Unknown layer kind {layer.kind!r}; expected one of "
                    f"{', '.join(LayerKind.values)}.")
        return errors

    required = _REQUIRED[layer.kind]
    for param in _PARAMS:
        value = getattr(layer, param)
        if param in required and value is None:
            add(param, f"Required for {layer.kind} layers.")
        elif param not in required and value is not None:
            add(param, f"Not applicable to {layer.kind} layers.")

    present = {p: v for p, v in _PARAM_VALIDATORS.items()
               if getattr(layer, p) is not None}
    param_errors = run_validators(layer, present, prefix)
    for field, messages in param_errors.items():
        errors.setdefault(field, []).extend(messages)

    arity = _ARITY.get(layer.kind, 1)
    if len(layer.inputs) != arity:
        add('inputs', f"{layer.kind} layers take exactly {arity} input(s), "
                      f"got {len(layer.inputs)}.")

    if layer.apply_relu and layer.kind not in _FUSABLE_RELU:
        add('apply_relu', f"ReLU cannot be fused into {layer.kind} layers.")

    # cross-field checks assume well-typed parameters
    if param_errors:
        return errors

    if (layer.kind == LayerKind.CONV and layer.groups
            and layer.out_channels and layer.out_channels % layer.groups):
        add('groups', f"out_channels ({layer.out_channels}) must be "
                      f"divisible by groups ({layer.groups}).")

    if (layer.kind == LayerKind.MAXPOOL and layer.window is not None
            and layer.padding is not None and layer.padding >= layer.window):
        add('padding', 'Pool padding must be smaller than the window.')

    return errors


@dataclass(frozen=True)
class ModelDescriptor:
    """A CNN as a DAG of layers listed in a valid execution order."""

    name: str
    input_shape: tuple
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, 'input_shape', tuple(self.input_shape))
        object.__setattr__(self, 'layers', tuple(self.layers))

    def layer(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"model {self.name!r} has no layer {name!r}")

    def layer_names(self):
        return [layer.name for layer in self.layers]

    @property
    def output_layer(self):
        return self.layers[-1]

    def parameterized_layers(self):
        return [layer for layer in self.layers if layer.is_parameterized]

    def replace_layers(self, layers):
        return replace(self, layers=tuple(layers))

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)


def structure_errors(model):
    """Collect DAG and parameter violations of a model."""
    errors = {}

    def add(field, message):
        errors.setdefault(field, []).append(message)

    if len(model.input_shape) != 3 or any(
            not isinstance(d, int) or d < 1 for d in model.input_shape):
        add('input_shape', 'Expected three positive integers (C, H, W), '
                           f"got {list(model.input_shape)}.")

    if not model.layers:
        add('layers', 'A model needs at least one layer.')

    seen = {INPUT}
    for layer in model.layers:
        if layer.name == INPUT:
            add(f"{layer.name}.name", f"{INPUT!r} is reserved for the model "
                                      'input.')
        elif layer.name in seen:
            add(f"{layer.name}.name", 'Duplicate layer name.')
        for source in layer.inputs:
            if source not in seen:
                add(f"{layer.name}.inputs",
                    f"{source!r} is not the model input or an earlier "
                    'layer.')
        for field, messages in layer_errors(layer).items():
            errors.setdefault(field, []).extend(messages)
        seen.add(layer.name)

    return errors


def window_output(size, window, stride, padding):
    """Sliding-window output extent: floor((size + 2p - c) / s) + 1."""
    return (size + 2 * padding - window) // stride + 1


def output_shape(layer, input_shapes):
    """Compute the output shape of layer from its producers' shapes."""
    c, h, w = input_shapes[0]

    if layer.kind == LayerKind.CONV:
        if c != layer.in_channels * layer.groups:
            raise ShapeError(
                f"expects {layer.in_channels * layer.groups} input channels "
                f"({layer.in_channels} x {layer.groups} groups), got {c}",
                layer.name)
        if min(h, w) + 2 * layer.padding < layer.kernel_size:
            raise ShapeError(
                f"kernel {layer.kernel_size} exceeds padded input {h}x{w} "
                f"(padding {layer.padding})", layer.name)
        return (layer.out_channels,
                window_output(h, layer.kernel_size, layer.stride,
                              layer.padding),
                window_output(w, layer.kernel_size, layer.stride,
                              layer.padding))

    if layer.kind == LayerKind.MAXPOOL:
        if min(h, w) + 2 * layer.padding < layer.window:
            raise ShapeError(
                f"window {layer.window} exceeds padded input {h}x{w} "
                f"(padding {layer.padding})", layer.name)
        return (c,
                window_output(h, layer.window, layer.stride, layer.padding),
                window_output(w, layer.window, layer.stride, layer.padding))

    if layer.kind == LayerKind.FC:
        if c * h * w != layer.in_channels:
            raise ShapeError(
                f"expects {layer.in_channels} inputs, producer yields "
                f"{c}x{h}x{w} = {c * h * w}", layer.name)
        return (layer.out_channels, 1, 1)

    if layer.kind == LayerKind.ELTWISE:
        if input_shapes[0] != input_shapes[1]:
            raise ShapeError(
                f"operand shapes differ: {input_shapes[0]} vs "
                f"{input_shapes[1]}", layer.name)
        return input_shapes[0]

    # lrn, relu
    return input_shapes[0]


def validate_model(model):
    """Check structure, parameters and shapes; return the model if valid.

    Structural and parameter violations raise a ValidationError listing all of
    them; a shape conflict raises ShapeError naming the first bad layer.
    """
    errors = structure_errors(model)
    if errors:
        raise ValidationError(errors)
    infer_shapes(model)
    return model


def infer_shapes(model):
    """Return a dict of layer name -> output shape in execution order.

    The model must be structurally valid (see structure_errors).
    """
    shapes = {INPUT: tuple(model.input_shape)}
    for layer in model.layers:
        try:
            sources = [shapes[name] for name in layer.inputs]
        except KeyError as e:
            raise ShapeError(f"unresolved input {e.args[0]!r}", layer.name)
        shapes[layer.name] = output_shape(layer, sources)
    del shapes[INPUT]
    return shapes


def input_shapes(model):
    """Return a dict of layer name -> shape of its first input."""
    shapes = infer_shapes(model)
    shapes[INPUT] = tuple(model.input_shape)
    return {layer.name: shapes[layer.inputs[0]] for layer in model.layers}


def layer_flop_count(layer, out_shape):
    """FLOPs of one layer counting a multiply-accumulate as two operations.

    Only conv and fc layers contribute; pooling, normalization, element-wise
    and activation layers count as zero.
    """
    if layer.kind == LayerKind.CONV:
        out_c, out_h, out_w = out_shape
        return (2 * out_h * out_w * out_c
                * layer.kernel_size * layer.kernel_size * layer.in_channels)
    if layer.kind == LayerKind.FC:
        return 2 * layer.out_channels * layer.in_channels
    return 0


def layer_flops(model):
    """Return a dict of layer name -> FLOPs."""
    shapes = infer_shapes(model)
    return {layer.name: layer_flop_count(layer, shapes[layer.name])
            for layer in model.layers}


def flop_count(model):
    """Total headline FLOPs of a model."""
    return sum(layer_flops(model).values())
