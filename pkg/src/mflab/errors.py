"""Exception hierarchy shared by the solvers and the harness."""


class LabError(Exception):
    """Base class for all errors raised by mflab."""


class ConfigurationError(LabError, ValueError):
    """Inconsistent grids, bad config files, size mismatches."""


class InputError(LabError, ValueError):
    """Preconditions on the arguments of an operation are violated."""


class SingularityError(LabError, ValueError):
    """A kernel was evaluated at its singular point."""


class NumericalError(LabError, RuntimeError):
    """A numerical procedure (quadrature, root find) failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class BlowUpError(LabError, RuntimeError):
    """NaN/Inf or runaway growth detected in a time integrator."""

    def __init__(self, message, last_valid_time):
        super().__init__(f"{message} (last valid time {last_valid_time:.6g})")
        self.last_valid_time = last_valid_time


class StepSizeError(LabError, ValueError):
    """Requested time step violates the stability/CFL guard."""


class NearCollisionError(LabError, RuntimeError):
    """Two particles came closer than the collision threshold."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


class AliasingError(LabError, ValueError):
    """The state carries spectral content outside the resolvable window."""
