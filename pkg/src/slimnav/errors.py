"""Exception types shared across the package."""


class SlimnavError(Exception):
    """Base class for all package errors."""


class ContractViolation(SlimnavError, ValueError):
    """A caller broke an operation's precondition (bad pose, bad rho, ...)."""


class ConfigError(SlimnavError):
    """Invalid or inconsistent configuration."""


class GenerationError(SlimnavError):
    """World generation or episode sampling could not satisfy its constraints."""


class DivergenceError(SlimnavError, FloatingPointError):
    """Training produced a non-finite loss."""
