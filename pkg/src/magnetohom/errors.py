"""Exception types raised by the homogenization engine."""


class MagnetohomError(Exception):
    """Base class for all package errors."""


class SeparationViolated(MagnetohomError, ValueError):
    """An inclusion voxel touches a face of the unit cell."""


class InvalidParams(MagnetohomError, ValueError):
    pass


class NonFiniteInput(MagnetohomError, ValueError):
    pass


class DegenerateDeformation(MagnetohomError, ValueError):
    pass


class NotCoercive(MagnetohomError, ValueError):
    pass


class NotConvex(MagnetohomError, ValueError):
    pass


class RadiusExhausted(MagnetohomError, RuntimeError):
    pass


class NonConvergence(MagnetohomError, RuntimeError):
    def __init__(self, message, iterations=None, grad_norm=None):
        super().__init__(message)
        self.iterations = iterations
        self.grad_norm = grad_norm


class ModelNotFinite(MagnetohomError, RuntimeError):
    pass


class ConfigError(MagnetohomError, ValueError):
    pass
