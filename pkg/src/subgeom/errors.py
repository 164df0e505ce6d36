"""Exception types raised across the package."""


class SubgeomError(Exception):
    pass


class DomainError(SubgeomError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ParameterError(SubgeomError, ValueError):
    """Inconsistent or out-of-range model/rate parameters."""


class ConvergenceError(SubgeomError, RuntimeError):
    """Quadrature or root finding failed to reach its tolerance."""


class SizeGuardError(SubgeomError, ValueError):
    pass


class BlowUpError(SubgeomError, RuntimeError):
    """Simulated path left the admissible range (|X| > 1e12)."""


class DegenerateFitError(SubgeomError, ValueError):
    pass


class UnsupportedKindError(SubgeomError, ValueError):
    pass
