"""Double-precision reference implementations of every layer kind.

These are the correctness oracle for the systolic engine: clarity over speed.
Loops over output positions are written as numpy slices, but every reduction
runs over its indices in ascending order, one term at a time, so results are
bit-reproducible and match a scalar loop nest exactly.
"""

import logging

import numpy as np

from arch_core.errors import MissingWeightsError, ShapeError
from arch_core.layers import INPUT, LayerKind, infer_shapes
from arch_core.tensor import Tensor


logger = logging.getLogger(__name__)


def _as_f64(tensor):
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    return np.asarray(data, dtype=np.float64)


def conv_ref(ifm, weights, bias, layer):
    """Standard convolution: for each filter, output row, output column,
    accumulate over input channel, kernel row and kernel column.

    weights is shaped (op_dim, ic_dim, c, c), bias has op_dim entries. The
    bias is added after the reduction. Fused ReLU is not applied here.
    """
    x = _as_f64(ifm)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    op_dim, ic_dim, c, groups = (layer.out_channels, layer.in_channels,
                                 layer.kernel_size, layer.groups)
    s, p = layer.stride, layer.padding

    if s < 1:
        raise ShapeError(f"stride must be >= 1, got {s}", layer.name)
    if w.shape != (op_dim, ic_dim, c, c):
        raise ShapeError(f"weights shaped {w.shape}, expected "
                         f"{(op_dim, ic_dim, c, c)}", layer.name)
    if b.shape != (op_dim,):
        raise ShapeError(f"bias shaped {b.shape}, expected {(op_dim,)}",
                         layer.name)
    if x.shape[0] != ic_dim * groups:
        raise ShapeError(f"IFM has {x.shape[0]} channels, expected "
                         f"{ic_dim * groups}", layer.name)

    h, wd = x.shape[1] + 2 * p, x.shape[2] + 2 * p
    if min(h, wd) < c:
        raise ShapeError(f"kernel {c} exceeds padded IFM {h}x{wd}",
                         layer.name)
    out_h, out_w = (h - c) // s + 1, (wd - c) // s + 1
    padded = np.pad(x, ((0, 0), (p, p), (p, p)))

    out = np.zeros((op_dim, out_h, out_w))
    per_group = op_dim // groups
    for g in range(groups):
        filters = slice(g * per_group, (g + 1) * per_group)
        for ch in range(ic_dim):
            plane = padded[g * ic_dim + ch]
            for ky in range(c):
                for kx in range(c):
                    window = plane[ky:ky + s * (out_h - 1) + 1:s,
                                   kx:kx + s * (out_w - 1) + 1:s]
                    out[filters] += (w[filters, ch, ky, kx][:, None, None]
                                     * window[None])
    out += b[:, None, None]
    return Tensor(out, dtype=np.float64)


def fc_ref(x, weights, bias):
    """out[j] = bias[j] + sum_i w[j][i] * x[i], summed over ascending i."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    w = np.asarray(weights)
    b = np.asarray(bias, dtype=np.float64)
    if w.ndim != 2 or w.shape[1] != x.size:
        raise ShapeError(f"weights shaped {w.shape} do not accept "
                         f"{x.size} inputs")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"bias shaped {b.shape}, expected {(w.shape[0],)}")

    acc = np.zeros(w.shape[0])
    for i in range(x.size):
        acc += w[:, i].astype(np.float64) * x[i]
    return b + acc


def maxpool_ref(ifm, window, stride, padding=0):
    """Per-channel sliding-window maximum; padding contributes -inf."""
    x = _as_f64(ifm)
    h, w = x.shape[1] + 2 * padding, x.shape[2] + 2 * padding
    if window > min(h, w):
        raise ShapeError(f"pool window {window} larger than padded input "
                         f"{h}x{w}")
    out_h, out_w = (h - window) // stride + 1, (w - window) // stride + 1
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)),
                    constant_values=-np.inf)

    rows, cols = stride * (out_h - 1) + 1, stride * (out_w - 1) + 1
    out = np.full((x.shape[0], out_h, out_w), -np.inf)
    for ky in range(window):
        for kx in range(window):
            out = np.maximum(out, padded[:, ky:ky + rows:stride,
                                         kx:kx + cols:stride])
    return Tensor(out, dtype=np.float64)


def lrn_ref(ifm, n, alpha, beta, k):
    """Cross-channel local response normalization.

    b[c] = a[c] / (k + alpha / n * sum(a[c'] ** 2)) ** beta over the n
    channels centered at c, clamped at the channel boundaries.
    """
    if n < 1 or n % 2 == 0:
        raise ValueError(f"LRN window must be a positive odd number, got {n}")
    a = _as_f64(ifm)
    squares = a * a
    channels = a.shape[0]
    half = n // 2

    out = np.empty_like(a)
    for ch in range(channels):
        acc = np.zeros(a.shape[1:])
        for other in range(max(0, ch - half), min(channels, ch + half + 1)):
            acc += squares[other]
        base = k + alpha / n * acc
        if np.any(base <= 0):
            raise ValueError(f"LRN denominator is not positive (k={k}) at "
                             f"channel {ch}")
        out[ch] = a[ch] / base ** beta
    return Tensor(out, dtype=np.float64)


def eltwise_relu_ref(a, b, apply_relu):
    """a + b, then max(., 0) if apply_relu."""
    x, y = _as_f64(a), _as_f64(b)
    if x.shape != y.shape:
        raise ShapeError(f"operand shapes differ: {x.shape} vs {y.shape}")
    out = x + y
    if apply_relu:
        out = np.maximum(out, 0.0)
    return Tensor(out, dtype=np.float64)


def relu_ref(a):
    return Tensor(np.maximum(_as_f64(a), 0.0), dtype=np.float64)


def model_ref_forward(model, input, weights):
    """Run every layer of model once, in order, on one input image.

    weights maps layer names to LayerWeights. Returns a dict of layer name ->
    double-precision output Tensor in execution order.
    """
    shapes = infer_shapes(model)
    outputs = {INPUT: Tensor(_as_f64(input), dtype=np.float64)}

    for layer in model.layers:
        sources = [outputs[name] for name in layer.inputs]

        if layer.kind == LayerKind.CONV:
            params = _weights_of(weights, layer)
            out = conv_ref(sources[0], params.weight, params.bias, layer)
            if layer.apply_relu:
                out = relu_ref(out)
        elif layer.kind == LayerKind.FC:
            params = _weights_of(weights, layer)
            vector = fc_ref(sources[0].data.reshape(-1), params.weight,
                            params.bias)
            if layer.apply_relu:
                vector = np.maximum(vector, 0.0)
            out = Tensor(vector.reshape(shapes[layer.name]),
                         dtype=np.float64)
        elif layer.kind == LayerKind.MAXPOOL:
            out = maxpool_ref(sources[0], layer.window, layer.stride,
                              layer.padding)
        elif layer.kind == LayerKind.LRN:
            out = lrn_ref(sources[0], layer.local_size, layer.alpha,
                          layer.beta, layer.k)
        elif layer.kind == LayerKind.ELTWISE:
            out = eltwise_relu_ref(sources[0], sources[1], layer.apply_relu)
        else:
            out = relu_ref(sources[0])

        outputs[layer.name] = out
        logger.debug('Reference %s -> %s', layer.name, out.shape)

    del outputs[INPUT]
    return outputs


def _weights_of(weights, layer):
    params = weights.get(layer.name)
    if params is None:
        raise MissingWeightsError(layer.name)
    return params
