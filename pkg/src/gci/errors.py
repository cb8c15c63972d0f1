"""Exception types shared across the package.

Every error raised on purpose derives from GciError so the CLI can map
contract violations to exit code 1 and I/O problems to exit code 2.
"""


class GciError(Exception):
    """Base class for all deliberate errors."""


class CycleError(GciError):
    """The edge set contains a directed cycle."""


class UnknownVariableError(GciError, KeyError):
    """A variable name is not present in the graph or dataset."""


class ContractError(GciError, ValueError):
    """Arguments violate an operation's preconditions."""


class DegenerateDataError(GciError, ValueError):
    """A column or statistic is degenerate (constant, zero variance)."""


class InsufficientDataError(GciError, ValueError):
    """Too few rows for the requested operation."""


class CapacityError(GciError, ValueError):
    """Exact enumeration would exceed the supported state-space size."""


class PositivityError(GciError, ValueError):
    """A treatment level or arm has no support in the data."""


class DensityError(GciError, ValueError):
    """A density estimate came out invalid (nonpositive variance)."""
