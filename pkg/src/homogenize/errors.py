"""Exception hierarchy shared by all modules."""


class HomogenizeError(Exception):
    """Base class for toolkit errors."""


class GeometryError(HomogenizeError, ValueError):
    pass


class MeshError(HomogenizeError):
    pass


class ContrastError(HomogenizeError, ValueError):
    pass


class QuasimomentumError(HomogenizeError, ValueError):
    pass


class SolverError(HomogenizeError):
    pass


class SingularError(SolverError):
    pass


class ResonanceError(SolverError):
    pass


class IllConditionedError(SolverError):
    pass


class DegenerateError(HomogenizeError):
    pass


class FitError(HomogenizeError):
    pass


class ModelMismatchError(HomogenizeError, ValueError):
    pass


class PoleError(HomogenizeError):
    pass


class MultiplierSingularError(HomogenizeError):
    pass


class ConvergenceError(HomogenizeError):
    pass


class ConfigError(HomogenizeError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")
