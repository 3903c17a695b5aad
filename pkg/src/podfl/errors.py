"""Exception types shared across the package."""


class PodflError(Exception):
    """Base class for every library-specific failure."""


class ConfigError(PodflError):
    """Invalid configuration value or an inconsistent parameter combination."""


class FormatError(PodflError):
    """Malformed on-disk artifact: an IDX file, a history record, or a proof document."""


class PartitionError(PodflError):
    """The requested client partition cannot be satisfied by the dataset."""


class ClusteringError(PodflError):
    """Cluster construction preconditions were violated."""


class CalibrationError(PodflError):
    """The requested privacy target lies outside the admissible range."""


class IntegrityError(PodflError):
    """A stored history failed a hash or completeness check."""


class EmptyShardError(PodflError):
    """The client holds no training examples; the caller should skip it."""
