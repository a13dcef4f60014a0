"""Exception hierarchy."""


class LodError(Exception):
    """Base class for all errors raised by lodgfem."""


class ConfigurationError(LodError, ValueError):
    """Invalid mesh levels, experiment configuration or incompatible inputs."""


class DomainError(LodError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigParseError(ConfigurationError):
    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


class SolverError(LodError, RuntimeError):
    """A linear or time-stepping solve failed."""


class ConvergenceError(SolverError):
    """CG did not reach the requested tolerance. ``report`` holds the last state."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class SaddlePointError(SolverError):
    """Constraint matrix rank deficient, or a patch solve failed."""


class BlowUpError(SolverError):
    """Non-finite values produced by a nonlinearity during time stepping."""


class StageError(LodError):
    """Wraps a failure in one stage of an experiment run."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
