"""Exception hierarchy shared by the numerical modules, the pipeline and the API."""


class SchroBranchError(Exception):
    """Base class for every error raised by the toolkit"""


class QuadratureError(SchroBranchError):
    """Gauss node computation did not converge"""


class SingularCoupling(SchroBranchError):
    """a11*a22 - a21*a12 vanishes, so there is no unique constant solution"""


class NonpositiveRadicand(SchroBranchError):
    """The constant-solution formula has no positive real root"""


class DegenerateSpectrum(SchroBranchError):
    """The linearization matrix has complex, equal or zero eigenvalues"""


class PositivityBreach(SchroBranchError):
    """A state left the positive cone at some node"""


class NoConvergence(SchroBranchError):
    def __init__(self, reason: str, iterations: int = 0, residual: float = float("nan")):
        self.reason = reason
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"Newton did not converge after {iterations} iterations: {reason} (residual={residual:.3e})")


class WrongRegime(SchroBranchError):
    """A diagnostic was requested outside the regime it is defined for"""


class DomainViolation(SchroBranchError):
    """A parameter family violates its validity conditions on its interval"""


class InsufficientPoints(SchroBranchError):
    """Not enough branch points for a fit"""


class InitialSwitchFailed(SchroBranchError):
    """The first corrector solve off the trivial branch failed for every trial amplitude"""


class KernelNotSimple(SchroBranchError):
    """The kernel at a bifurcation point is not one-dimensional"""


class StageFailure(SchroBranchError):
    def __init__(self, stage: str, reason: str):
        self.stage = stage
        self.reason = reason
        super().__init__(f"stage '{stage}' failed: {reason}")
