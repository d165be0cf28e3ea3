"""Exceptions shared by all simulator apps.

Validation of user-supplied parameters uses django's ValidationError so that
every violation is reported at once. The classes below cover the failures that
are not plain parameter validation.
"""


class ShapeError(ValueError):
    """Tensor or layer shapes do not agree.

    The message always names the offending layer when one is known.
    """

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"layer {layer!r}: {message}"
        super().__init__(message)
        self.layer = layer


class MissingWeightsError(LookupError):
    """A parameterized layer has no weights in the weight store."""

    def __init__(self, layer):
        super().__init__(f"no weights for layer {layer!r}")
        self.layer = layer

    def __str__(self):
        return self.args[0]
