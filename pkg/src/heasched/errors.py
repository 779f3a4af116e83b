"""Exception hierarchy shared across the package."""


class HeaschedError(Exception):
    """Base class for all package errors."""


class UnknownConfig(HeaschedError, ValueError):
    """BSED/MF pair is not on the tabulated grid."""


class MissingEntry(HeaschedError, LookupError):
    """Tabulated grid point exists but has no hybrid-electric variant."""


class SlotOutOfRange(HeaschedError, IndexError):
    pass


class EmptyWindow(HeaschedError, ValueError):
    pass


class ZeroDwell(HeaschedError, ValueError):
    pass


class Infeasible(HeaschedError):
    """No feasible solution exists.

    ``family`` names the first constraint family found violated, when known.
    ``task`` identifies the offending charging task, when applicable.
    """

    def __init__(self, message, family=None, task=None):
        super().__init__(message)
        self.family = family
        self.task = task


class ModelInfeasiblePrecheck(Infeasible):
    """A precondition of the rescheduling model fails before any solve."""


class GapNotReached(HeaschedError):
    """Search budget exhausted before the requested optimality gap.

    ``incumbent`` carries the best solution found, or None.
    """

    def __init__(self, message, incumbent=None):
        super().__init__(message)
        self.incumbent = incumbent


class ParseError(HeaschedError, ValueError):
    def __init__(self, reason, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + reason)
        self.line = line
        self.column = column
        self.reason = reason


class InconsistentPair(HeaschedError, ValueError):
    def __init__(self, connect_id, reason):
        super().__init__(f"connection {connect_id!r}: {reason}")
        self.connect_id = connect_id
