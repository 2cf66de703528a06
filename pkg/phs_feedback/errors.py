#!/usr/bin/env python3
"""
Exception hierarchy for the stabilization toolkit.

Each class carries the CLI exit code of its failure class.
"""


class PHSError(Exception):
    """Base class for every error raised by phs_feedback"""

    exit_code = 3


class DomainError(PHSError, ValueError):
    """Argument outside the domain of an operation"""

    exit_code = 3


class NotAnEnergyDensityError(DomainError):
    """Lower eigenvalue bound is not positive"""


class DimensionError(DomainError):
    """Matrix or state shapes do not fit together"""


class RankDeficientError(DomainError):
    """A boundary matrix lacks full row rank"""

    def __init__(self, message, offending_rows=()):
        super().__init__(message)
        self.offending_rows = tuple(offending_rows)


class WindowError(DomainError):
    """Sideways-energy or fitting window not covered by a trajectory"""


class ConfigError(PHSError):
    """Configuration file cannot be parsed or violates the schema"""

    exit_code = 1

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


class HypothesisError(PHSError):
    """A hypothesis of the stabilization result fails"""

    exit_code = 2


class NumericalError(PHSError):
    """NaN during integration, singular solve or dimension cap exceeded"""

    exit_code = 3
