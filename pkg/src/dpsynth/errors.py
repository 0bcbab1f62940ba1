"""Exception hierarchy shared across the toolkit.

Two branches matter for the CLI contract: ``ValidationError`` covers bad
inputs and configuration (exit code 2), ``MechanismError`` covers runtime
failures inside a mechanism or the I/O layer (exit code 3).
"""


class DpSynthError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DpSynthError):
    """Invalid input, schema, or configuration."""


class MechanismError(DpSynthError):
    """Runtime failure inside a mechanism, model fit, or report writer."""


# -- validation ---------------------------------------------------------------

class MissingColumn(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class OutOfDomainValue(ValidationError):
    pass


class UnparseableCell(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class EmptySplit(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class NoTarget(ValidationError):
    pass


class SchemaMismatch(ValidationError):
    pass


class NonPositiveParameter(ValidationError):
    pass


class SplitOutOfRange(ValidationError):
    pass


class EmptyCandidates(ValidationError):
    pass


class DomainTooSmall(ValidationError):
    pass


class TooFewAlgorithms(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class EmptyPlan(ValidationError):
    pass


# -- mechanism / runtime -------------------------------------------------------

class BudgetExhausted(MechanismError):
    pass


class DomainTooLarge(MechanismError):
    pass


class DegenerateFeatures(MechanismError):
    pass


class AuditViolation(MechanismError):
    pass


class ReportIoError(MechanismError):
    pass
