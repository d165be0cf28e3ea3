"""Hypothesis strategies and fixtures shared by the test suites."""

import numpy as np
from hypothesis import strategies as st

from .config import ArchConfig
from .layers import INPUT, LayerDescriptor
from .tensor import LayerWeights, weight_shapes


CONFIG_VALUES = (1, 2, 4, 16)


def arch_configs(values=CONFIG_VALUES):
    return st.builds(ArchConfig, st.sampled_from(values),
                     st.sampled_from(values), st.sampled_from(values))


@st.composite
def conv_layers(draw, max_size=7, max_channels=4, max_filters=4):
    """Draw (layer, ifm_shape) for a small, valid conv layer."""
    c = draw(st.integers(1, 3))
    stride = draw(st.integers(1, 2))
    padding = draw(st.integers(0, c - 1))
    groups = draw(st.integers(1, 2))
    ic_dim = draw(st.integers(1, max_channels))
    op_dim = groups * draw(st.integers(1, max_filters))
    low = max(1, c - 2 * padding)
    height = draw(st.integers(low, max_size))
    width = draw(st.integers(low, max_size))
    layer = LayerDescriptor.conv('conv', [INPUT], op_dim, ic_dim, c,
                                 stride=stride, padding=padding,
                                 groups=groups)
    return layer, (ic_dim * groups, height, width)


def random_weights(rng, layer, dtype=np.float32):
    weight_shape, bias_shape = weight_shapes(layer)
    return LayerWeights(
        rng.uniform(-0.1, 0.1, weight_shape).astype(dtype),
        rng.uniform(-0.1, 0.1, bias_shape).astype(dtype))


def random_ifm(rng, shape, dtype=np.float32):
    return rng.standard_normal(shape).astype(dtype)
