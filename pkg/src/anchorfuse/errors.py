"""Exception hierarchy shared by all anchorfuse modules."""


class AnchorFuseError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(AnchorFuseError, ValueError):
    pass


class EmptyInput(InvalidInput):
    pass


class DimensionError(AnchorFuseError, ValueError):
    pass


class SingularMatrix(AnchorFuseError, ArithmeticError):
    pass


class DegenerateVariance(AnchorFuseError, ArithmeticError):
    pass


class DegenerateEstimates(InvalidInput):
    """Analyst estimates have zero dispersion."""


class InsufficientEstimates(InvalidInput):
    """Fewer than two analyst estimates were supplied."""


class EmptyDataset(AnchorFuseError):
    pass


class FormatError(AnchorFuseError):
    """A binary artifact has a bad magic, version, or layout."""


class ConsistencyError(AnchorFuseError):
    """Two artifacts that should agree (ids, row counts, encoders) do not."""


class InvalidConfig(AnchorFuseError, ValueError):
    pass


class ConfigError(InvalidConfig):
    pass


class InvalidSpec(InvalidConfig):
    pass


class DegenerateLabels(AnchorFuseError, ValueError):
    pass


class TrainingDiverged(AnchorFuseError, ArithmeticError):
    pass


class IncompleteRun(AnchorFuseError):
    pass
