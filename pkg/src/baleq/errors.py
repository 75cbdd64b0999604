"""Exception types raised by the solvers.

The CLI maps :class:`InputError` (and its subclasses) to exit code 2 and
:class:`SolverError` to exit code 3.
"""


class BaleqError(Exception):
    """Base class for all package errors."""


class InputError(BaleqError, ValueError):
    """Malformed or out-of-range input."""


class PreconditionError(InputError):
    """An operation was called on a state that violates its contract."""


class DomainError(InputError):
    """Argument outside the mathematical domain of a function."""


class InconsistentMomentsError(InputError):
    """Throughput moments contradict the ordering the equilibrium needs."""


class SolverError(BaleqError, RuntimeError):
    """A numerical solver could not produce a unique answer."""


class NoRootError(SolverError):
    """No sign change in the bracket."""


class AmbiguousRootError(SolverError):
    def __init__(self, message, roots):
        super().__init__(message)
        self.roots = list(roots)
