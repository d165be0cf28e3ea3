"""Binary weight store.

File layout, all integers unsigned 32-bit little-endian:

    b'SCNN'  version (one byte, 1)
    then for every conv and fc layer, weight record before bias record:
        name length, UTF-8 name ("<layer>.weight" or "<layer>.bias"),
        rank, dims..., payload of little-endian float32 in row-major order

Conv weights are (op_dim, ic_dim, c, c), fc weights (op_dim, ic_dim), biases
(op_dim,).
"""

import logging
import struct

import numpy as np

from arch_core.errors import MissingWeightsError
from arch_core.tensor import LayerWeights, weight_shapes


logger = logging.getLogger(__name__)

MAGIC = b'SCNN'
VERSION = 1

_U32 = struct.Struct('<I')
_PARTS = ('weight', 'bias')


class WeightFormatError(ValueError):
    pass


class MagicMismatch(WeightFormatError):
    pass


class RecordShapeMismatch(WeightFormatError):
    def __init__(self, record, shape, expected):
        super().__init__(f"record {record!r} has shape {shape}, layer needs "
                         f"{expected}")
        self.record = record


class ShortRead(WeightFormatError):
    pass


class RecordNameError(WeightFormatError):
    pass


class _Reader:
    def __init__(self, data, source):
        self.data = data
        self.source = source
        self.offset = 0

    def take(self, size, what):
        end = self.offset + size
        if end > len(self.data):
            raise ShortRead(f"{self.source}: file ends inside {what} at byte "
                            f"{len(self.data)}, {end - len(self.data)} bytes "
                            'missing')
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what):
        return _U32.unpack(self.take(_U32.size, what))[0]

    @property
    def exhausted(self):
        return self.offset == len(self.data)


def read_records(data, source='<bytes>'):
    """Parse a weight file's bytes into a dict of record name -> array."""
    reader = _Reader(data, source)
    header = reader.take(len(MAGIC) + 1, 'header')
    if header[:len(MAGIC)] != MAGIC:
        raise MagicMismatch(f"{source}: not a weight file (magic "
                            f"{header[:len(MAGIC)]!r}, expected {MAGIC!r})")
    if header[len(MAGIC)] != VERSION:
        raise MagicMismatch(f"{source}: unsupported version "
                            f"{header[len(MAGIC)]}, expected {VERSION}")

    records = {}
    while not reader.exhausted:
        raw = reader.take(reader.u32('record name length'), 'record name')
        try:
            name = raw.decode('utf-8')
        except UnicodeDecodeError as e:
            raise RecordNameError(
                f"{source}: record name {raw!r} at byte "
                f"{reader.offset - len(raw)} is not UTF-8") from e
        rank = reader.u32(f"rank of {name!r}")
        shape = tuple(reader.u32(f"dims of {name!r}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(count * 4, f"payload of {name!r}")
        records[name] = np.frombuffer(payload, dtype='<f4').reshape(shape)
    return records


def load_weights(path, model):
    """Read the weights of every parameterized layer of model from path."""
    with open(path, 'rb') as f:
        records = read_records(f.read(), str(path))

    weights = {}
    for layer in model.parameterized_layers():
        arrays = []
        for part, expected in zip(_PARTS, weight_shapes(layer)):
            record = f"{layer.name}.{part}"
            if record not in records:
                raise MissingWeightsError(layer.name)
            array = records.pop(record)
            if array.shape != expected:
                raise RecordShapeMismatch(record, array.shape, expected)
            arrays.append(array.astype(np.float32))
        weights[layer.name] = LayerWeights(*arrays)
    if records:
        raise WeightFormatError(f"{path}: records for unknown layers: "
                                f"{', '.join(sorted(records))}")
    logger.info('Loaded weights of %s layers from %s', len(weights), path)
    return weights


def encode_weights(model, weights):
    chunks = [MAGIC, bytes([VERSION])]
    for layer in model.parameterized_layers():
        for part, array in zip(_PARTS, weights[layer.name]):
            name = f"{layer.name}.{part}".encode('utf-8')
            array = np.asarray(array, dtype='<f4')
            chunks.append(_U32.pack(len(name)) + name)
            chunks.append(struct.pack(f"<{array.ndim + 1}I", array.ndim,
                                      *array.shape))
            chunks.append(np.ascontiguousarray(array).tobytes())
    return b''.join(chunks)


def save_weights(path, model, weights):
    with open(path, 'wb') as f:
        f.write(encode_weights(model, weights))


def synthetic_weights(model, seed):
    """Seeded uniform(-0.1, 0.1) weights and biases for every conv and fc
    layer, drawn in layer order."""
    rng = np.random.default_rng(seed)
    weights = {}
    for layer in model.parameterized_layers():
        weight_shape, bias_shape = weight_shapes(layer)
        weights[layer.name] = LayerWeights(
            rng.uniform(-0.1, 0.1, weight_shape).astype(np.float32),
            rng.uniform(-0.1, 0.1, bias_shape).astype(np.float32))
    return weights
