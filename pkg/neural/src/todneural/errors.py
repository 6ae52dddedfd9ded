"""Exception taxonomy.

Everything this package raises on purpose derives from NeuralError, so
callers can catch one type at the CLI boundary.
"""


class NeuralError(Exception):
    """Base class for errors raised by this package."""


class RecordError(NeuralError):
    """A training-record file is malformed or a record violates its contract."""


class CheckpointError(NeuralError):
    """A model checkpoint cannot be read or does not match this package."""
