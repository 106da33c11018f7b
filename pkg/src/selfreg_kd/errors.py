"""Exception hierarchy.

Every error raised on purpose by this package derives from
:class:`SelfRegKDError`, and most also derive from the builtin exception a
caller would naturally catch (``ValueError``, ``RuntimeError``...).
"""


class SelfRegKDError(Exception):
    pass


class InvalidParameterError(SelfRegKDError, ValueError):
    pass


class DimensionError(SelfRegKDError, ValueError):
    """Array shapes do not line up.

    ``layer`` holds the index of the offending layer when the mismatch was
    detected inside a model.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class StateError(SelfRegKDError, RuntimeError):
    pass


class NumericError(SelfRegKDError, ArithmeticError):
    """A loss or gradient became non-finite during training."""

    def __init__(self, message, epoch=None, batch=None, loss=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class ConfigError(SelfRegKDError, ValueError):
    pass


class DataFormatError(SelfRegKDError, ValueError):
    pass


class BadMagicError(DataFormatError):
    pass


class TruncatedDataError(DataFormatError):
    pass


class CountMismatchError(DataFormatError):
    pass


class SchemaError(SelfRegKDError, ValueError):
    pass


class DuplicateRunError(SchemaError):
    pass
