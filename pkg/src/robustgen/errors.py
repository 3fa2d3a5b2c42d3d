"""Exception types shared across the toolkit."""


class RobustgenError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(RobustgenError):
    """An argument lies outside its documented domain."""


class EmptyInputError(RobustgenError):
    """An operation that needs data received none."""


class UnsupportedSpaceError(RobustgenError):
    """The sample space does not support the requested construction."""


class PartitionTooLargeError(RobustgenError):
    """The requested partition would exceed the configured cell limit."""


class OutOfSpaceError(RobustgenError):
    """A point lies outside the declared sample space."""


class CoverViolationError(RobustgenError):
    """A point is covered by no center of a supposed cover."""


class CertificateInapplicableError(RobustgenError):
    """The certificate's preconditions do not hold for this model."""


class DegenerateClassifierError(RobustgenError):
    """Distance to the decision boundary is undefined (zero weight vector)."""


class WrongTheoremError(RobustgenError):
    """The certificate kind does not match the requested bound."""


class WrongCorollaryError(WrongTheoremError):
    """A sample-dependent certificate was passed to the sharp adaptive bound."""


class PreconditionViolatedError(RobustgenError):
    """A bound precondition fails for these inputs."""


class NotDoeblinError(RobustgenError):
    """No power of the transition matrix up to the cap has all entries positive."""


class EstimatorUnavailableError(RobustgenError):
    """The partition kind has no per-cell probe sampler."""


class NumericalFailureError(RobustgenError):
    """An iterative routine failed to converge within its iteration cap."""


class ConfigError(RobustgenError):
    """A configuration file, dataset, or CLI argument is invalid."""
