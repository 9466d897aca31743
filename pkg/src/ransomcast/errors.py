"""Exception hierarchy shared by every stage of the pipeline."""


class RansomcastError(Exception):
    """Base class; the CLI reports these as structured errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# ingestion
class InvalidDomain(RansomcastError, ValueError):
    pass


class EmptyZone(RansomcastError):
    pass


class TldMismatch(RansomcastError):
    pass


class DateOrder(RansomcastError):
    pass


class ZoneSyntaxError(RansomcastError):
    pass


class MissingColumns(RansomcastError):
    pass


class EmptyRange(RansomcastError):
    pass


# whois
class SchemaUnknown(RansomcastError):
    pass


class InvalidDate(RansomcastError, ValueError):
    pass


class BudgetExhausted(RansomcastError):
    pass


class LookupFailed(RansomcastError):
    pass


# classifier
class SingleClass(RansomcastError):
    pass


class NonFiniteFeature(RansomcastError):
    pass


class SchemaMismatch(RansomcastError):
    pass


class InsufficientData(RansomcastError):
    pass


# forecasting
class InvalidStochasticVector(RansomcastError, ValueError):
    pass


class DegenerateSeries(UserWarning):
    """Warning: a constant count series cannot support several distinct states."""


class NumericalUnderflow(RansomcastError):
    pass


class UnfitModel(RansomcastError, ValueError):
    pass


class SeriesTooShort(RansomcastError):
    pass


class NonStationaryFit(RansomcastError):
    pass


class ConstantSeries(RansomcastError):
    pass


class ExogCoverage(RansomcastError):
    pass


class AllFitsFailed(RansomcastError):
    pass


class WindowTooLarge(RansomcastError, ValueError):
    pass


class LengthMismatch(RansomcastError, ValueError):
    pass


class MaseUndefined(RansomcastError):
    pass


# cli
class ConfigError(RansomcastError):
    pass


class NoZoneFiles(RansomcastError):
    pass


class MissingCandidates(RansomcastError):
    pass
