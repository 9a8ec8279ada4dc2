"""Exception types shared across the solver, driver, and CLI layers."""


class ConfigError(Exception):
    """Raised for malformed or inconsistent run configuration."""


class PhysicsError(Exception):
    """Raised when the discrete solution leaves the admissible set.

    Carries enough context (cell indices, time, step) for the driver to
    flush partial output before aborting.
    """

    def __init__(self, message, cells=None, time=None, step=None):
        super().__init__(message)
        self.cells = list(cells) if cells is not None else []
        self.time = time
        self.step = step
        self.partial = None


class ReportError(Exception):
    """Raised when stored run artifacts are missing or inconsistent."""
