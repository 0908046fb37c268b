class CurvMFError(Exception):
    """Base class for all errors raised by curvmf."""


class MeshError(CurvMFError, ValueError):
    pass


class DomainError(CurvMFError, ValueError):
    """The state lies outside the open set where the energy is defined."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class NonGeometricBranchError(CurvMFError, ValueError):
    pass


class InfeasibleSpecError(CurvMFError, ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstructionError(CurvMFError, RuntimeError):
    pass


class ConsistencyError(CurvMFError, RuntimeError):
    pass


class ConfigError(CurvMFError, ValueError):
    pass
