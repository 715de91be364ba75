"""Exception hierarchy shared by every module."""


class VslPanelError(Exception):
    """Base class for all package errors."""


class SchemaError(VslPanelError):
    """A mandatory column is absent from an input table."""

    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"missing mandatory column {column!r}")


class IntegrityError(VslPanelError):
    """Input rows violate a structural invariant (duplicate keys, bad dummies)."""


class MergeError(VslPanelError):
    """Some (industry, period) pairs have no entry in the risk table."""

    def __init__(self, unmatched):
        self.unmatched = list(unmatched)
        pairs = ", ".join(f"({j}, {t})" for j, t in self.unmatched)
        super().__init__(f"no fatal-risk entry for {len(self.unmatched)} pair(s): {pairs}")


class ConfigurationError(VslPanelError):
    """A spec, filter or study configuration is inconsistent with the data."""


class UndefinedInputError(VslPanelError):
    """An operation was asked to summarize an empty input."""


class PreconditionError(VslPanelError):
    """Arguments violate a documented precondition."""


class ReportError(VslPanelError):
    """A report could not be assembled from its inputs."""


class EstimationError(VslPanelError):
    """Base class for failures inside an estimator."""


class SingularityError(EstimationError):
    """The design matrix is rank deficient."""

    def __init__(self, column, stage=None):
        self.column = column
        self.stage = stage
        where = f" ({stage} stage)" if stage else ""
        super().__init__(f"design matrix is singular{where}: column {column!r} is linearly dependent")


class InsufficientDataError(EstimationError):
    """Not enough usable observations for the requested estimator."""


class DegenerateClusterError(EstimationError):
    """Cluster-robust covariance requested with fewer than two clusters."""


class ConvergenceError(EstimationError):
    """An iterative optimizer stopped without meeting its tolerance."""

    def __init__(self, message, best=None, gradient_norm=None):
        self.best = best
        self.gradient_norm = gradient_norm
        super().__init__(f"{message} (gradient norm {gradient_norm!r})")


class StudyError(VslPanelError):
    """Too many replicate failures in a Monte Carlo study."""

    def __init__(self, spec, n_failed, n_total):
        self.spec = spec
        self.n_failed = n_failed
        self.n_total = n_total
        super().__init__(f"spec {spec!r} failed on {n_failed} of {n_total} replicates (limit 10%)")
