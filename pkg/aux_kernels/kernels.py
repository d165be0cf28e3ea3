"""Single-precision POOL, LRN and MemWrite (element-wise sum + ReLU) kernels.

Each kernel moves `lanes` channels of one spatial position per cycle, so a
C x H x W output takes ceil(C / lanes) * H * W cycles. With lanes = 1 that is
one output element per cycle.
"""

from collections import namedtuple
import logging
from math import ceil

import numpy as np

from arch_core.config import WORD_BYTES
from arch_core.errors import ShapeError
from arch_core.tensor import Tensor


logger = logging.getLogger(__name__)


AuxStats = namedtuple('AuxStats', 'cycles, bytes_in, bytes_out')


def aux_cycles(out_shape, lanes=1):
    channels, height, width = out_shape
    if lanes < 1:
        raise ValueError(f"lanes must be >= 1, got {lanes}")
    return ceil(channels / lanes) * height * width


def _f32(tensor):
    data = tensor.data if isinstance(tensor, Tensor) else tensor
    return np.asarray(data, dtype=np.float32)


def _stats(out, lanes, *inputs):
    return AuxStats(cycles=aux_cycles(out.shape, lanes),
                    bytes_in=sum(x.size for x in inputs) * WORD_BYTES,
                    bytes_out=out.size * WORD_BYTES)


def simulate_pool(ifm, layer, lanes=1):
    x = _f32(ifm)
    window, stride, padding = layer.window, layer.stride, layer.padding or 0
    h, w = x.shape[1] + 2 * padding, x.shape[2] + 2 * padding
    if window > min(h, w):
        raise ShapeError(f"pool window {window} larger than padded input "
                         f"{h}x{w}", layer.name)
    out_h, out_w = (h - window) // stride + 1, (w - window) // stride + 1
    padded = np.pad(x, ((0, 0), (padding, padding), (padding, padding)),
                    constant_values=-np.inf)

    rows, cols = stride * (out_h - 1) + 1, stride * (out_w - 1) + 1
    out = np.full((x.shape[0], out_h, out_w), -np.inf, dtype=np.float32)
    for ky in range(window):
        for kx in range(window):
            np.maximum(out, padded[:, ky:ky + rows:stride,
                                   kx:kx + cols:stride], out=out)
    return Tensor(out), _stats(out, lanes, x)


def simulate_lrn(ifm, layer, lanes=1):
    x = _f32(ifm)
    n = layer.local_size
    alpha, beta, k = (np.float32(layer.alpha), np.float32(layer.beta),
                      np.float32(layer.k))
    channels, half = x.shape[0], n // 2
    squares = x * x

    out = np.empty_like(x)
    for ch in range(channels):
        window = squares[max(0, ch - half):min(channels, ch + half + 1)]
        base = k + alpha / np.float32(n) * window.sum(axis=0,
                                                      dtype=np.float32)
        if np.any(base <= 0):
            raise ValueError(f"layer {layer.name!r}: LRN denominator is not "
                             f"positive (k={layer.k}) at channel {ch}")
        out[ch] = x[ch] / base ** beta
    return Tensor(out), _stats(out, lanes, x)


def simulate_memwrite(a, b=None, apply_relu=False, lanes=1):
    """Write back a, or a + b, through the optional ReLU."""
    x = _f32(a)
    inputs = [x]
    if b is not None:
        y = _f32(b)
        if y.shape != x.shape:
            raise ShapeError(f"operand shapes differ: {x.shape} vs {y.shape}")
        inputs.append(y)
        x = x + y
    if apply_relu:
        x = np.maximum(x, np.float32(0))
    return Tensor(x), _stats(x, lanes, *inputs)
