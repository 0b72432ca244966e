"""Exception hierarchy shared by all modules."""


class PathHJBError(Exception):
    """Base class for library errors."""


class GridAlignmentError(PathHJBError, ValueError):
    """Paths (or a path and a time) do not live on a common grid."""


class HorizonError(PathHJBError, ValueError):
    """A time lies beyond the horizon T."""


class ParameterError(PathHJBError, ValueError):
    """A numeric parameter is outside its admissible range."""


class ContractError(PathHJBError, TypeError):
    """A functional lacks a callback the operation needs."""


class InconsistentExtensionError(PathHJBError, ValueError):
    """Two functionals disagree on continuous paths."""


class SolverError(PathHJBError, RuntimeError):
    """The Picard iteration failed to converge."""

    def __init__(self, message, last_ratio=None):
        super().__init__(message)
        self.last_ratio = last_ratio


class BudgetError(PathHJBError, RuntimeError):
    """An exhaustive enumeration would exceed its configured cap."""


class RefinementError(PathHJBError, ValueError):
    """Grid too coarse for the requested sweep."""


class InputError(PathHJBError, ValueError):
    """Inputs violate a documented precondition."""


class DomainError(PathHJBError, ValueError):
    """A functional was evaluated outside its domain (e.g. a cadlag path)."""


class GridSnapWarning(UserWarning):
    """A time was rounded onto the path grid."""
