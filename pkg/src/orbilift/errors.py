"""Exception hierarchy shared by all modules."""


class OrbiliftError(Exception):
    pass


# numeric / group
class NonSquare(OrbiliftError):
    pass


class DimMismatch(OrbiliftError):
    pass


class Singular(OrbiliftError):
    pass


class NotFinite(OrbiliftError):
    pass


class BudgetExceeded(OrbiliftError):
    pass


class EvaluationError(OrbiliftError):
    pass


# quotient
class AmbiguousCanonical(OrbiliftError):
    pass


# lifting
class NotOrbitPreserving(OrbiliftError):
    pass


class Ambiguous(OrbiliftError):
    pass


class Inconsistent(OrbiliftError):
    pass


class StepTooLarge(OrbiliftError):
    pass


class SeedOffOrbit(OrbiliftError):
    pass


class ObstructionFound(OrbiliftError):
    pass


class NoConsistentImage(OrbiliftError):
    pass


class NotHomomorphism(OrbiliftError):
    pass


class JacobianMismatch(OrbiliftError):
    pass


class SingularJacobian(OrbiliftError):
    pass


class NoGroupElement(OrbiliftError):
    pass


# atlas
class NoFactor(OrbiliftError):
    pass


class IdentificationIncomplete(OrbiliftError):
    pass


class EmptyRestriction(OrbiliftError):
    pass


class OutOfChart(OrbiliftError):
    pass


class ParseError(OrbiliftError):
    """Malformed atlas file; ``field`` names the offending location."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
