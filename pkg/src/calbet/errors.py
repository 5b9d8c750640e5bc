"""Exception and warning types shared across the package.

Errors split into two families so the CLI can map them onto exit codes:
``ConfigError`` (bad invocation or configuration, exit 2) and ``DataError``
(inputs that fail validation, exit 3). ``InvariantViolation`` (exit 4) flags
a bug rather than bad input.
"""


class CalbetError(Exception):
    """Base class for all package errors."""


class ConfigError(CalbetError):
    pass


class DataError(CalbetError, ValueError):
    pass


class InvariantViolation(CalbetError, AssertionError):
    pass


# -- ingestion -------------------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class UnparseableValue(DataError):
    def __init__(self, row, column, value, path=None):
        self.row = row
        self.column = column
        self.value = value
        where = f"{path}: " if path else ""
        super().__init__(f"{where}row {row}, column {column!r}: cannot parse {value!r}")


class DuplicateGameId(DataError):
    def __init__(self, game_id):
        self.game_id = game_id
        super().__init__(f"duplicate game_id {game_id!r}")


class InvalidRecord(DataError):
    pass


class OddsNotAboveOne(DataError):
    def __init__(self, odds, game_id=None):
        self.odds = odds
        self.game_id = game_id
        tag = f" (game {game_id})" if game_id is not None else ""
        super().__init__(
            f"decimal odds must exceed 1.0, got {odds!r}{tag}; "
            "American or fractional odds are not accepted"
        )


class UnknownSeason(DataError):
    pass


# -- metrics ---------------------------------------------------------------

class ProbabilityOutOfRange(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


# -- features --------------------------------------------------------------

class SeasonMismatch(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class NoPriorGames(DataError):
    pass


class MissingPreviousSeason(DataError):
    pass


class ZeroVarianceFeature(DataError):
    def __init__(self, feature):
        self.feature = feature
        super().__init__(f"feature {feature!r} has zero variance")


class UnknownFeature(DataError):
    pass


class SampleTooSmall(DataError):
    pass


# -- learners / selection ----------------------------------------------------

class DimensionMismatch(DataError):
    pass


class SingleClassTraining(DataError):
    pass


class NonFiniteLoss(CalbetError, ArithmeticError):
    pass


class DegenerateSample(DataError):
    pass


class EmptyCandidates(DataError):
    pass


# -- backtest --------------------------------------------------------------

class NotAValueBet(CalbetError, ValueError):
    pass


class ChronologyViolation(DataError):
    pass


class ForecastMissing(DataError):
    pass


class NonPositiveInitial(ConfigError, ValueError):
    pass


# -- warnings --------------------------------------------------------------

class CalbetWarning(UserWarning):
    pass


class UnmatchedGamesWarning(CalbetWarning):
    pass


class OrphanOddsWarning(CalbetWarning):
    pass


class EmptyJoinWarning(CalbetWarning):
    pass


class AllFeaturesShiftedWarning(CalbetWarning):
    pass
