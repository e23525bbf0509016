#!/usr/bin/env python3
"""
Exceptions for the p-adic normal form library

Precondition problems map to exit code 2 and broken certificates to exit
code 3 in the job runner.
"""


class NormalFormError(Exception):
    """Base class for all library errors"""

    exit_code = 1


class PreconditionError(NormalFormError, ValueError):
    """An operation was called outside its domain"""

    exit_code = 2


class UnsupportedCaseError(PreconditionError):
    """Eigenvalue configuration the drivers do not handle"""


class DomainError(PreconditionError):
    """Arithmetic domain violation (zero where a unit is required)"""


class CertificateViolation(NormalFormError, RuntimeError):
    """A residual or margin guaranteed by theory failed to hold"""

    exit_code = 3


class RootOfUnityMismatch(NormalFormError):
    """A coefficient ratio cannot be matched by any root of unity in Q_p"""

    def __init__(self, power: int, ratio):
        self.power = power
        self.ratio = ratio
        super().__init__(f"ratio {ratio} at power {power} is not +1 or -1")


SADDLE_MESSAGE = (
    "out of scope: resonant saddle-type map (|lambda1| < 1 < |lambda2|); "
    "analytic equivalence with the normal form is an open problem"
)
