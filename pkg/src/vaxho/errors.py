"""Exception hierarchy shared across the toolkit.

Every error carries an ``exit_code`` so the command-line driver can map
failures onto the documented process exit codes: 2 for data/structural
problems, 3 for numerical failures, 4 for configuration mistakes.
"""


class VaxhoError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1

    def __init__(self, message, exit_code=None):
        super().__init__(message)
        if exit_code is not None:
            self.exit_code = exit_code


class StructuralError(VaxhoError):
    """Input violates the documented layout (labels, dimensions, keys)."""

    exit_code = 2


class ParseError(StructuralError):
    """A cell could not be parsed; message carries row/column coordinates."""


class DataQualityError(VaxhoError):
    """Values are readable but inadmissible (negative value added, bad shares)."""

    exit_code = 2


class SingularSystemError(VaxhoError):
    """The retained production system is numerically singular."""

    exit_code = 3

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class ToleranceError(VaxhoError):
    """A numerical result breached its correctness tolerance."""

    exit_code = 3


class RankError(VaxhoError):
    """Design matrix is rank deficient after absorbing fixed effects."""

    exit_code = 3

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class OracleError(VaxhoError):
    """A brute-force test oracle was used outside its applicability range."""

    exit_code = 3


class ConfigError(VaxhoError):
    """Pipeline configuration is missing, malformed, or inconsistent."""

    exit_code = 4
