"""Exception hierarchy.

Each exception carries an ``exit_code`` so the command line can map failures
onto its documented exit statuses without a lookup table.
"""


class ClinRelError(Exception):
    exit_code = 2


# -- configuration / usage (exit 1) ------------------------------------------


class ConfigError(ClinRelError):
    exit_code = 1


class UnknownSchema(ConfigError):
    pass


class MalformedSchema(ConfigError):
    pass


class DuplicateRule(MalformedSchema):
    pass


# -- data problems (exit 2) ---------------------------------------------------


class DataError(ClinRelError):
    exit_code = 2


class MalformedLine(DataError):
    def __init__(self, message, line_no=None, line=None):
        if line_no is not None:
            message = f"line {line_no}: {message}: {line!r}"
        super().__init__(message)
        self.line_no = line_no
        self.line = line


class DanglingReference(DataError):
    pass


class OffsetOutOfRange(DataError):
    pass


class UnassignedEntity(DataError):
    pass


class AmbiguousRole(DataError):
    pass


class ConflictingGold(DataError):
    pass


class EntitySpaceMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class IOFailure(DataError):
    pass


# -- training / inference (exit 3) -------------------------------------------


class ModelError(ClinRelError):
    exit_code = 3


class MarkersDoNotFit(ModelError):
    def __init__(self, message, pair_ref=None):
        if pair_ref is not None:
            message = f"{message} (pair {pair_ref[0]}:{pair_ref[1]}-{pair_ref[2]})"
        super().__init__(message)
        self.pair_ref = pair_ref


class PositionOutOfRange(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class InvalidShape(ModelError):
    pass


class EmptyStratum(ModelError):
    pass


class AmbiguousSchemaForBinary(ModelError):
    pass


class AmbiguousCategory(ModelError):
    pass


class MissingGroup(ModelError):
    def __init__(self, message, csd=None):
        super().__init__(message)
        self.csd = csd
