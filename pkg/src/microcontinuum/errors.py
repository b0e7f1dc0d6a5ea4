"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`MicrocontinuumError`. The harness maps the three families below onto
its exit codes (usage/schema -> 2, numeric blow-up -> 3).
"""


class MicrocontinuumError(Exception):
    """Base class for all package errors."""


class UsageError(MicrocontinuumError):
    """Bad input shape, missing slot or other caller mistake."""


class NumericBlowUp(MicrocontinuumError):
    """A computation produced non-finite or inadmissible values."""


# geometry
class PointOutsideChart(UsageError):
    pass


class SingularMetric(NumericBlowUp):
    pass


class ValenceMismatch(UsageError):
    pass


# kinematics
class BoundaryNode(UsageError):
    pass


class DegenerateF(NumericBlowUp):
    pass


class NonInjectiveMotion(NumericBlowUp):
    pass


class MissingTimeLevel(UsageError):
    pass


# constitutive
class SlotNotInSignature(UsageError):
    pass


class NonFiniteEnergy(NumericBlowUp):
    pass


class SingularF0(NumericBlowUp):
    pass


class ZeroNormal(UsageError):
    pass


# covariance / voids / variational
class NonEuclideanChart(UsageError):
    pass


class CFLViolation(UsageError):
    pass


class VoidFractionOutOfRange(NumericBlowUp):
    pass


class NonFiniteDensity(NumericBlowUp):
    pass


# harness
class ParseError(UsageError):
    pass


class SchemaError(UsageError):
    pass


class RegimeFieldMissing(SchemaError):
    def __init__(self, field: str):
        super().__init__(f"required field {field!r} missing for this regime")
        self.field = field
