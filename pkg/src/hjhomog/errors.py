"""Exception hierarchy.

Three families matter to callers: validation errors (bad configuration or
precondition, CLI exit code 2), numerical contract violations (a solver could
not meet its accuracy/feasibility contract, exit code 3), and I/O errors
(exit code 4).
"""


class HjhomogError(Exception):
    """Base class for everything raised deliberately by this package."""

    exit_code = 1


class ValidationError(HjhomogError):
    """Bad input: config values, preconditions, incompatible objects."""

    exit_code = 2


class NumericalError(HjhomogError):
    """A numerical contract could not be met."""

    exit_code = 3


class IOFormatError(HjhomogError):
    """Malformed or unwritable artifact on disk."""

    exit_code = 4


# -- geometry -----------------------------------------------------------------

class NotOnBoundary(ValidationError):
    pass


class ProjectionDiverged(NumericalError):
    pass


class EmptyBoundary(NumericalError):
    pass


class DegenerateObliqueness(ValidationError):
    pass


# -- Hamiltonians / Lagrangians ------------------------------------------------

class DegenerateAngle(ValidationError):
    """Contact angle too close to pi; the modified running cost is unbounded."""


# -- Skorokhod -----------------------------------------------------------------

class StepTooLarge(NumericalError):
    """A control step could not be pulled back to the closure."""


# -- grids / value solver --------------------------------------------------------

class CFLViolation(ValidationError):
    pass


class WindowTooSmall(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class Unreachable(ValidationError):
    """Endpoint outside the reachable cone of the control net."""


class NoPath(NumericalError):
    """Path connector failed to find a route inside the closure."""


class BudgetExceeded(NumericalError):
    """Direct search exhausted its evaluation budget without converging."""


class OutsideValidatedRegion(ValidationError):
    """Analytic oracle asked for a point outside its region of validity."""


# -- homogenization ---------------------------------------------------------------

class TableGap(NumericalError):
    """Requested slope falls outside the tabulated effective Lagrangian."""


class ResolutionInsufficient(NumericalError):
    """Half-resolution control run moved the answer more than tolerated."""


# -- file formats ------------------------------------------------------------------

class CorruptHeader(IOFormatError):
    pass


class VersionMismatch(IOFormatError):
    pass
