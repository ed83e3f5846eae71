"""Exception hierarchy shared by the solver stack."""


class TrajectoryError(RuntimeError):
    """Base class for failures while integrating a geometric trajectory."""


class SingularTrajectory(TrajectoryError):
    """The trajectory reached the sec(phi) singularity or reversed eta."""


class StepFailure(TrajectoryError):
    """The adaptive integrator could not meet its tolerance."""


class InsufficientCrossings(TrajectoryError):
    """Fewer zero crossings than requested exist before eta_max."""


class NoConvergence(RuntimeError):
    """The nonlinear solve or continuation did not converge.

    ``phidot_i`` is set when the failure is tied to a family grid point.
    """

    def __init__(self, message, phidot_i=None):
        super().__init__(message)
        self.phidot_i = phidot_i


class SingularJacobian(NoConvergence):
    pass


class GridMismatch(ValueError):
    pass


class DomainError(ValueError):
    """Argument outside the domain where a formula is finite."""
