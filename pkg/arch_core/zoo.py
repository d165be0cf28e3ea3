"""Builders for the bundled model descriptors.

The full-size models are used for FLOP counting and the performance model;
the toy variants keep the same layer mix at sizes the event-driven simulator
runs through in well under a second.

ResNet's global average pool is expressed as a full-window max pool because
average pooling is not supported; it contributes no FLOPs either way.
"""

from .layers import INPUT, LayerDescriptor, ModelDescriptor, output_shape


class _Builder:
    """Accumulates layers while tracking each producer's output shape."""

    def __init__(self, name, input_shape):
        self.name = name
        self.input_shape = tuple(input_shape)
        self.layers = []
        self.shapes = {INPUT: self.input_shape}

    def _add(self, layer):
        self.shapes[layer.name] = output_shape(
            layer, [self.shapes[src] for src in layer.inputs])
        self.layers.append(layer)
        return layer.name

    def conv(self, name, src, out_channels, kernel_size, stride=1, padding=0,
             groups=1, relu=False):
        in_channels = self.shapes[src][0] // groups
        return self._add(LayerDescriptor.conv(
            name, [src], out_channels, in_channels, kernel_size,
            stride=stride, padding=padding, groups=groups, apply_relu=relu))

    def fc(self, name, src, out_channels, relu=False):
        c, h, w = self.shapes[src]
        return self._add(LayerDescriptor.fc(
            name, [src], out_channels, c * h * w, apply_relu=relu))

    def maxpool(self, name, src, window, stride=None, padding=0):
        return self._add(LayerDescriptor.maxpool(
            name, [src], window, stride=stride, padding=padding))

    def lrn(self, name, src):
        return self._add(LayerDescriptor.lrn(name, [src]))

    def eltwise(self, name, a, b, relu=False):
        return self._add(LayerDescriptor.eltwise(name, [a, b],
                                                 apply_relu=relu))

    def relu(self, name, src):
        return self._add(LayerDescriptor.relu(name, [src]))

    def build(self):
        return ModelDescriptor(self.name, self.input_shape, self.layers)


def alexnet():
    """Two-tower AlexNet on 227x227x3 images."""
    b = _Builder('alexnet', (3, 227, 227))
    x = b.conv('conv1', INPUT, 96, 11, stride=4, relu=True)
    x = b.lrn('norm1', x)
    x = b.maxpool('pool1', x, 3, stride=2)
    x = b.conv('conv2', x, 256, 5, padding=2, groups=2, relu=True)
    x = b.lrn('norm2', x)
    x = b.maxpool('pool2', x, 3, stride=2)
    x = b.conv('conv3', x, 384, 3, padding=1, relu=True)
    x = b.conv('conv4', x, 384, 3, padding=1, groups=2, relu=True)
    x = b.conv('conv5', x, 256, 3, padding=1, groups=2, relu=True)
    x = b.maxpool('pool5', x, 3, stride=2)
    x = b.fc('fc6', x, 4096, relu=True)
    x = b.fc('fc7', x, 4096, relu=True)
    b.fc('fc8', x, 1000)
    return b.build()


RESNET_STAGES = {
    50: (3, 4, 6, 3),
    101: (3, 4, 23, 3),
    152: (3, 8, 36, 3),
}


def _bottleneck(b, prefix, src, planes, stride, project):
    """Append one bottleneck block and return the name of its output."""
    x = b.conv(f"{prefix}_branch2a", src, planes, 1, stride=stride,
               relu=True)
    x = b.conv(f"{prefix}_branch2b", x, planes, 3, padding=1, relu=True)
    x = b.conv(f"{prefix}_branch2c", x, planes * 4, 1)
    if project:
        shortcut = b.conv(f"{prefix}_branch1", src, planes * 4, 1,
                          stride=stride)
    else:
        shortcut = src
    return b.eltwise(prefix, shortcut, x, relu=True)


def _residual_stages(b, x, stages, base_planes):
    for stage, blocks in enumerate(stages):
        planes = base_planes * 2 ** stage
        for block in range(blocks):
            prefix = f"res{stage + 2}{_block_suffix(block, blocks)}"
            stride = 2 if block == 0 and stage > 0 else 1
            x = _bottleneck(b, prefix, x, planes, stride, project=block == 0)
    return x


def _block_suffix(block, blocks):
    """Block names: a, b, c... in short stages, a, b1, b2... in long ones."""
    if blocks <= 6:
        return 'abcdef'[block]
    return 'a' if block == 0 else f"b{block}"


def resnet(depth=50):
    """Bottleneck ResNet on 224x224x3 images, stride on the first 1x1 conv."""
    if depth not in RESNET_STAGES:
        raise ValueError(f"unsupported ResNet depth {depth}; expected one of "
                         f"{sorted(RESNET_STAGES)}")
    b = _Builder(f"resnet{depth}", (3, 224, 224))
    x = b.conv('conv1', INPUT, 64, 7, stride=2, padding=3, relu=True)
    x = b.maxpool('pool1', x, 3, stride=2, padding=1)
    x = _residual_stages(b, x, RESNET_STAGES[depth], 64)
    x = b.maxpool('pool5', x, b.shapes[x][1], stride=1)
    b.fc('fc1000', x, 1000)
    return b.build()


def alexnet_toy():
    """AlexNet's layer mix (grouped conv, LRN, pooling, FC) at toy size."""
    b = _Builder('alexnet_toy', (3, 19, 19))
    x = b.conv('conv1', INPUT, 8, 3, stride=2, relu=True)
    x = b.lrn('norm1', x)
    x = b.maxpool('pool1', x, 3, stride=2)
    x = b.conv('conv2', x, 16, 3, padding=1, groups=2, relu=True)
    x = b.maxpool('pool2', x, 2, stride=2)
    x = b.fc('fc6', x, 32, relu=True)
    b.fc('fc7', x, 10)
    return b.build()


def resnet_toy():
    """Three bottleneck blocks, one of them strided, at toy size."""
    b = _Builder('resnet_toy', (4, 8, 8))
    x = b.conv('conv1', INPUT, 8, 3, padding=1, relu=True)
    x = b.maxpool('pool1', x, 3, stride=2, padding=1)
    x = _residual_stages(b, x, (2, 1), 4)
    x = b.maxpool('pool5', x, b.shapes[x][1], stride=1)
    b.fc('fc10', x, 10)
    return b.build()


BUNDLED = {
    'alexnet': alexnet,
    'resnet50': lambda: resnet(50),
    'resnet152': lambda: resnet(152),
    'alexnet_toy': alexnet_toy,
    'resnet_toy': resnet_toy,
}
"""Descriptors shipped under fixtures/models, by file stem."""
