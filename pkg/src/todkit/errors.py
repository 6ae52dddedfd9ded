"""Exception hierarchy shared by every todkit layer.

Parsing and validation raise subclasses of :class:`HarnessError` with
positional detail in the message (file, index, offending name) so a CLI or
service layer can surface them without stack traces.  Backend failures get
their own branch so evaluation loops can tally them without catching
unrelated bugs.
"""


class HarnessError(Exception):
    """Base class for all errors raised by this package."""


class MalformedDocument(HarnessError):
    """Input document is not syntactically valid (bad JSON, wrong top-level shape)."""


class SchemaViolation(HarnessError):
    """A schema file violates a structural invariant."""


class AnnotationViolation(HarnessError):
    """A dialogue file violates a structural invariant."""


class UnclassifiedDomain(HarnessError):
    """A dialogue references a service that is in neither split."""


class VariantMismatch(HarnessError):
    """A schema variant set does not correspond one-to-one to the base set."""


class NoSuchFrame(HarnessError):
    """The addressed turn does not carry a frame for the requested service."""


class EmptySchema(HarnessError):
    """The schema offers no intents to build a goal from."""


class EmptyInput(HarnessError):
    """A metric was asked to aggregate over an empty collection."""


class ConfigError(HarnessError):
    """Run configuration is inconsistent or incomplete."""


class BackendError(HarnessError):
    """Base class for generation-backend failures."""


class BackendUnavailable(BackendError):
    """The peer is gone, refused the connection, or reported a failure."""


class BackendTimeout(BackendError):
    """The peer did not answer within the deadline."""


class ProtocolViolation(BackendError):
    """The peer sent a frame that violates the wire protocol."""
