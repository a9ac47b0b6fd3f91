"""Exception hierarchy shared by every module of the package."""


class FedNestError(Exception):
    """Base class for all package errors."""


class ContractViolation(FedNestError, ValueError):
    """An argument violates an operation's precondition (shape, domain)."""


class NumericFault(FedNestError, FloatingPointError):
    """A sampled or computed quantity is not finite."""


class DivergenceError(FedNestError, ArithmeticError):
    """An iterate left the bounded region the guard allows.

    Attributes
    ----------
    stepsize : float or None
        The stepsize in force when the guard tripped.
    epoch : int or None
        Outer epoch index, filled in by the orchestrator when known.
    """

    def __init__(self, message, stepsize=None, epoch=None):
        super().__init__(message)
        self.stepsize = stepsize
        self.epoch = epoch


class InvalidSpec(FedNestError, ValueError):
    """A problem specification cannot be realised."""


class ConfigError(FedNestError, ValueError):
    """A run configuration failed to parse or validate."""


class NotAvailable(FedNestError, NotImplementedError):
    """The requested closed-form quantity is not defined for this instance."""


class UnsupportedConfiguration(FedNestError, ValueError):
    """The operation is not defined for the given mode or settings."""


class PayloadError(ContractViolation):
    """A communication payload is not a plain vector of an allowed length."""
