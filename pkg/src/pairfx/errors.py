"""Exception hierarchy shared by every pairfx module."""
from __future__ import annotations


class PairFxError(Exception):
    """Base class for all library errors."""


# data model
class SchemaError(PairFxError):
    pass


class MissingColumn(SchemaError):
    def __init__(self, column, row=None):
        self.column = column
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"missing column {column!r}{where}")


class NonBinaryExposure(SchemaError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}: exposure {column!r} must be 0 or 1, got {value!r}")


class NonFiniteValue(SchemaError):
    def __init__(self, row, column, value):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}: column {column!r} is not a finite number ({value!r})")


class DuplicatePairId(SchemaError):
    def __init__(self, row, pair_id):
        self.row, self.pair_id = row, pair_id
        super().__init__(f"row {row}: duplicate pair_id {pair_id!r}")


class InvalidCategory(SchemaError):
    def __init__(self, row, column, value, levels):
        self.row, self.column, self.value = row, column, value
        super().__init__(f"row {row}: {value!r} is not a level of {column!r} {list(levels)}")


class EmptySubset(PairFxError):
    pass


class SchemaMismatch(PairFxError):
    pass


# regression
class RankDeficient(PairFxError):
    pass


class TooFewRows(PairFxError):
    pass


class Separation(PairFxError):
    pass


class BothClassesRequired(PairFxError):
    pass


class NonConvergence(PairFxError):
    pass


# dale
class NoValidRoot(PairFxError):
    pass


# estimators
class ZeroPropensity(PairFxError):
    pass


class MixedModels(PairFxError):
    pass


class Collinear(PairFxError):
    pass


# inference
class TooManyFailedReplicates(PairFxError):
    def __init__(self, failed, total):
        self.failed, self.total = failed, total
        super().__init__(f"{failed} of {total} replicates failed (limit 5%)")


# oracle
class WorldValidationError(PairFxError):
    pass


class PositivityViolation(PairFxError):
    def __init__(self, cell, pattern=None):
        self.cell, self.pattern = cell, pattern
        extra = f" for exposure pattern {pattern}" if pattern is not None else ""
        super().__init__(f"zero probability{extra} in covariate cell {cell}")


class NoDiscordantMass(PairFxError):
    pass


class ModelAssumptionViolated(PairFxError):
    pass


# failures that a bootstrap / Monte Carlo replicate may drop and count
REPLICATE_FAILURES = (Separation, NonConvergence, RankDeficient, TooFewRows,
                      BothClassesRequired, Collinear, NoValidRoot, ZeroPropensity, EmptySubset)
