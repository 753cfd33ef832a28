"""Exception hierarchy shared by all modules."""


class SpecflowError(Exception):
    """Base class for library errors."""


class DegenerateOperator(SpecflowError):
    """Operator has an eigenvalue inside the invertibility gap."""

    def __init__(self, message, min_abs_eigenvalue=None):
        super().__init__(message)
        self.min_abs_eigenvalue = min_abs_eigenvalue


class DimensionMismatch(SpecflowError, ValueError):
    pass


class MismatchedJ(SpecflowError, ValueError):
    """Two sign-compact operators do not share the same sign operator J."""


class EigenNonConvergence(SpecflowError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class UnresolvedCrossing(SpecflowError):
    """Bisection hit its depth cap without isolating a crossing."""

    def __init__(self, message, interval):
        super().__init__(message)
        self.interval = tuple(interval)


class EndpointMismatch(SpecflowError, ValueError):
    pass


class EndpointDegenerateInHomotopy(SpecflowError):
    def __init__(self, message, s):
        super().__init__(message)
        self.s = s


class DegenerateEndpoint(DegenerateOperator):
    pass


class NonSymmetricHessian(SpecflowError):
    def __init__(self, message, asymmetry):
        super().__init__(message)
        self.asymmetry = asymmetry


class NoConvergence(SpecflowError):
    """Newton iteration failed; carries the best iterate found."""

    def __init__(self, message, u, residual):
        super().__init__(message)
        self.u = u
        self.residual = residual


class UnknownFamily(SpecflowError, KeyError):
    pass


class MaskedBasepoint(SpecflowError, ValueError):
    pass


class SeamMismatch(SpecflowError, ValueError):
    """Seam witness does not identify the operators at the two chart ends."""


class SingularMetric(SpecflowError):
    pass


class ChartExit(SpecflowError):
    def __init__(self, message, exit_time):
        super().__init__(message)
        self.exit_time = exit_time


class TangentialDegeneracy(SpecflowError):
    pass


class CurvatureCheckFailed(SpecflowError):
    pass
