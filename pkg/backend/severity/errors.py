"""
Exception hierarchy for the severity app.

Every error carries the exit code the management commands return for it:
1 for usage problems, 2 for data and estimation problems.
"""


class SeverityError(Exception):
    """Base class for all errors raised by the severity app"""

    exit_code = 2


# Usage


class UsageError(SeverityError):
    exit_code = 1


class InvalidModelSpec(UsageError):
    pass


class UnknownTerm(UsageError):
    def __init__(self, term):
        self.term = term
        super().__init__(f"Unknown model term '{term}'")


class DegenerateSplit(UsageError):
    pass


class InvalidConfig(UsageError):
    pass


class UnsupportedOrder(UsageError):
    def __init__(self, m):
        self.m = m
        super().__init__(f"Quadrature order must lie in [1, 101], got {m}")


class NegativeVariance(UsageError):
    pass


class EmptyComparison(UsageError):
    def __init__(self):
        super().__init__("At least one fitted model is required for a comparison")


# Data


class DataError(SeverityError):
    exit_code = 2


class DataFileNotFound(DataError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"Data file not found: {path}")


class UnreadableFile(DataError):
    """The file exists but cannot be decoded or parsed"""

    def __init__(self, path, reason):
        self.path = path
        super().__init__(f"{path}: cannot be read: {reason}")


class MissingColumn(DataError):
    def __init__(self, path, columns):
        self.path = path
        self.columns = tuple(columns)
        super().__init__(f"{path}: missing column(s) {', '.join(self.columns)}")


class RowError(DataError):
    """Validation failure tied to one line of an input file"""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}, line {line}: {message}")


class UnresolvedRoadId(RowError):
    def __init__(self, path, line, road_id):
        self.road_id = road_id
        super().__init__(path, line, f"road_id '{road_id}' not found in road table")


class InvalidBinaryValue(RowError):
    def __init__(self, path, line, column, value):
        self.column = column
        self.value = value
        super().__init__(path, line, f"{column} must be 0 or 1, got '{value}'")


class NonPositiveAadt(RowError):
    def __init__(self, path, line, value):
        self.value = value
        super().__init__(path, line, f"aadt must be positive, got '{value}'")


class InvalidRoadValue(RowError):
    pass


class EmptyDataset(DataError):
    pass


class InsufficientGroups(DataError):
    def __init__(self, groups):
        self.groups = groups
        super().__init__(
            f"A multilevel fit needs at least 2 roads with crashes, got {groups}"
        )


class DegenerateOutcome(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class OneClassOnly(DataError):
    def __init__(self):
        super().__init__("Both outcome classes must be present")


class InvalidLabels(DataError):
    pass


# Estimation


class EstimationError(SeverityError):
    exit_code = 2


class SeparationDetected(EstimationError):
    pass


class SingularInformation(EstimationError):
    pass


class DimensionMismatch(EstimationError):
    pass


class NotConverged(EstimationError):
    pass
