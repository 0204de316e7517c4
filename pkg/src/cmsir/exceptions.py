"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Bad configuration or invalid model input.

    ``path`` names the offending key (dotted) when the error comes from a
    configuration file.
    """

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class SolverError(RuntimeError):
    """A deterministic limit computation failed or is undefined."""


class NoMajorOutbreak(SolverError):
    """No interior root of the infective half-edge function exists."""


class SimulationInvariantError(RuntimeError):
    """Internal bookkeeping of the half-edge simulator is corrupt."""
