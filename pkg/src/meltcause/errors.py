"""Exception hierarchy shared across the toolkit."""


class MeltcauseError(Exception):
    """Base class for all toolkit errors."""


class DataError(MeltcauseError):
    """Input data is missing, malformed or inconsistent."""


class SchemaMismatchError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class ConfigError(MeltcauseError):
    """A configuration value violates its documented constraints."""


class InsufficientSamplesError(DataError):
    """Too few valid rows remain for a conditional-independence query."""


class DegenerateConditioningError(MeltcauseError):
    """The conditioning design matrix is rank deficient."""


class UnstableSpecError(ConfigError):
    """A synthetic generator specification would produce a divergent process."""
