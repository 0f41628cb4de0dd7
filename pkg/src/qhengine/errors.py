"""Exception types shared across the package."""


class QHEngineError(Exception):
    """Base class for all errors raised by qhengine."""


class DimensionError(QHEngineError, ValueError):
    """Operand shapes are incompatible."""


class NotHermitianError(QHEngineError, ValueError):
    """An operator that must be Hermitian is not."""


class ScheduleError(QHEngineError, ValueError):
    """A schedule violates symmetry, area conservation or basic sanity."""


class SteadyStateError(QHEngineError, RuntimeError):
    """No fixed point of the cycle map could be found."""


class CPTPViolation(QHEngineError, RuntimeError):
    """A propagated state is no longer a valid density matrix."""


class AttributionError(QHEngineError, RuntimeError):
    """Per-agent energy attribution does not add up to the total change."""


class ConfigError(QHEngineError, ValueError):
    """Malformed or inconsistent run configuration."""
