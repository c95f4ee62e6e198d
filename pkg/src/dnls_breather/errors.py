"""Exception hierarchy for numerical failures."""


class DimensionError(ValueError):
    pass


class ConfigError(ValueError):
    """Parameters outside the admissible box."""


class NumericalFailure(RuntimeError):
    """Base class for failures that the CLI maps to exit code 1."""


class NonConvergence(NumericalFailure):
    def __init__(self, msg, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


class JacobianSingular(NumericalFailure):
    pass


class ZeroOffDiagonal(ValueError):
    pass


class NonPositiveDamping(NumericalFailure):
    pass


class StepUnderflow(NumericalFailure):
    pass


class NonFiniteState(NumericalFailure):
    pass


class CeilingExceeded(NumericalFailure):
    def __init__(self, msg, t=None, zeta_norm=None):
        super().__init__(msg)
        self.t = t
        self.zeta_norm = zeta_norm


class OutOfNeighborhood(NonConvergence):
    pass


class SpectrumError(NumericalFailure):
    def __init__(self, msg, matrix=None):
        super().__init__(msg)
        self.matrix = matrix
