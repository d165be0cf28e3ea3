"""Dense CHW tensors and per-layer weight containers."""

from collections import namedtuple
import hashlib

import numpy as np

from .errors import ShapeError


class Tensor:
    """A feature map or weight volume in channel-major, row-major order.

    The wrapped numpy array is read-only, so a Tensor can be shared freely.
    The engine works on float32 tensors; the oracle produces float64 ones.
    """

    __slots__ = ('_data',)

    def __init__(self, data, dtype=None):
        array = np.array(data, dtype=dtype, copy=True)
        if array.ndim != 3:
            raise ShapeError(
                f"tensor must have 3 dimensions (C, H, W), got {array.shape}")
        array.setflags(write=False)
        self._data = array

    @classmethod
    def from_flat(cls, shape, values, dtype=np.float32):
        """Build a tensor from a flat sequence of C * H * W values."""
        flat = np.asarray(values, dtype=dtype)
        expected = int(np.prod(shape))
        if flat.size != expected:
            raise ShapeError(
                f"expected {expected} values for shape {tuple(shape)}, "
                f"got {flat.size}")
        return cls(flat.reshape(shape))

    @classmethod
    def from_file(cls, path, shape):
        """Read a raw little-endian float32 file holding exactly shape."""
        values = np.fromfile(path, dtype='<f4')
        tensor = cls.from_flat(shape, values)
        if not np.all(np.isfinite(tensor.data)):
            raise ValueError(f"{path}: tensor contains NaN or Inf values")
        return tensor

    def to_file(self, path):
        self._data.astype('<f4').tofile(path)

    @property
    def data(self):
        return self._data

    @property
    def shape(self):
        return self._data.shape

    @property
    def channels(self):
        return self._data.shape[0]

    @property
    def height(self):
        return self._data.shape[1]

    @property
    def width(self):
        return self._data.shape[2]

    @property
    def dtype(self):
        return self._data.dtype

    def flat(self):
        return self._data.reshape(-1)

    def checksum(self):
        """Short digest of the single-precision contents."""
        payload = np.ascontiguousarray(self._data, dtype='<f4').tobytes()
        return hashlib.sha256(payload).hexdigest()[:16]

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"


LayerWeights = namedtuple('LayerWeights', 'weight, bias')
"""Weights and bias of one conv or fc layer as numpy arrays.

Conv weights are shaped (op_dim, ic_dim, c, c), fc weights (op_dim, ic_dim);
the bias always has op_dim elements.
"""


def weight_shapes(layer):
    """Return the (weight_shape, bias_shape) a parameterized layer needs."""
    if layer.kind == 'conv':
        c = layer.kernel_size
        return ((layer.out_channels, layer.in_channels, c, c),
                (layer.out_channels,))
    if layer.kind == 'fc':
        return ((layer.out_channels, layer.in_channels),
                (layer.out_channels,))
    raise ValueError(f"layer {layer.name!r} of kind {layer.kind!r} "
                     'has no weights')
