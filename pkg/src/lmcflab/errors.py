"""Exception hierarchy.

Every error raised by the library derives from :class:`LabError`.  Errors that
signal a numerical breakdown derive from :class:`NumericalError`; the command
line maps those to exit code 3.
"""


class LabError(Exception):
    """Base class for all library errors."""


class NumericalError(LabError):
    """A computation could not be completed reliably."""


class ConfigError(LabError):
    """Invalid scenario or command configuration."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class VerificationError(LabError):
    """A verification suite reported a failing check."""


class UnknownSuite(LabError):
    pass


# geometry
class NotLagrangian(LabError):
    pass


class NotSpecial(LabError):
    pass


class Degenerate(LabError):
    pass


class ZeroEps(LabError):
    pass


# surfaces
class DegenerateGrid(LabError):
    pass


class BoundaryNode(LabError):
    pass


class MeshTangled(LabError):
    pass


# flow
class CFLViolation(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class DegenerateTriangle(NumericalError):
    pass


class PolylineCollapse(NumericalError):
    """A curve factor collapsed; the flow reached its singular time."""


class ProfileCollapse(NumericalError):
    """An equivariant profile curve reached the origin."""


class OutOfRange(LabError):
    pass


# quadrature and diagnostics
class MissingAreaRatio(LabError):
    pass


class DomainError(LabError):
    pass


class DisconnectedRegion(LabError):
    pass


class NoImprovement(LabError):
    pass


class NotCloseAtUnitScale(LabError):
    pass


class IllConditioned(NumericalError):
    pass


# drift
class BadGapParams(LabError):
    pass


class InsufficientAngularCoverage(LabError):
    pass
