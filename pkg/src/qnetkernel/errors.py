"""Exception types shared across the package."""


class QnkError(Exception):
    """Base class for all package errors."""


class NotHolder(QnkError):
    """A node tried to act on a meta-header it does not currently hold."""


class NonMonotone(QnkError):
    """A stamp timestamp does not strictly increase the header's log."""


class DuplicateEntId(QnkError):
    """Insert of an entanglement resource whose id is already tabled."""


class ForeignResource(QnkError):
    """Insert of a resource that does not list the owning node as endpoint."""


class NotFound(QnkError):
    """Lookup of an unknown entanglement resource id."""


class Expired(QnkError):
    """Use of an entanglement resource past its coherence deadline."""


class DomainError(QnkError):
    """Fidelity argument outside the valid Werner range [0.25, 1]."""


class ResourceMissing(QnkError):
    """A quantum operation lacks one of its required input resources."""


class NoRoute(QnkError):
    """The classical forwarding table has no next hop for a destination."""


class NoClassicalRoute(QnkError):
    """No classical path exists between signal source and destination."""


class NotNeighbor(QnkError):
    """Packet forwarding attempted to a node that is not a direct neighbor."""


class CapabilityMissing(QnkError):
    """The node's micro-protocol library lacks a required primitive."""


class UnsupportedService(QnkError):
    """No planner strategy is registered for the requested service."""


class UnknownSignal(QnkError):
    """A classical signal of an unrecognized kind (logged, never fatal)."""


class UnknownNode(QnkError):
    """Reference to a node that is not part of the topology."""


class InvalidIntent(QnkError):
    """A service intent violates its structural invariants."""


class NonMonotoneLog(QnkError):
    """A per-header stamp log with non-increasing timestamps."""


class ParseError(QnkError):
    """Input file or payload is not syntactically valid."""


class ValidationError(QnkError):
    """Input parsed but violates the schema; message carries the field path."""


class LimitExceeded(QnkError):
    """Simulation hit its event or sim-time limit before quiescence.

    Carries the partial trace collected so far.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []
