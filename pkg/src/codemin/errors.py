"""Exception hierarchy shared across the package."""


class CodeminError(Exception):
    """Base class for all errors raised by codemin."""


class TopologyError(CodeminError):
    """Malformed or invalid topology document / instance."""


class CyclicGraphError(CodeminError):
    """An operation that requires an acyclic graph received a cyclic one."""

    def __init__(self, message, cycle=None):
        super().__init__(message)
        self.cycle = list(cycle) if cycle else []


class InfeasibleError(CodeminError):
    """The target rate is unachievable, or an input violates a feasibility precondition."""


class ProtocolError(CodeminError):
    """Distributed-simulator invariant violation (missing input buffer, bad index)."""
