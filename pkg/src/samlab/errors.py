"""Exception hierarchy shared by the library and the CLI."""


class SamlabError(Exception):
    """Base class for all errors raised by samlab."""


class ConfigError(SamlabError, ValueError):
    """Invalid configuration: bad field values, shape mismatches, unknown names."""


class GraphStateError(SamlabError, RuntimeError):
    """A computation graph was used out of order (e.g. backward before forward)."""


class DomainError(SamlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateDirectionError(SamlabError, ValueError):
    """No ascent direction exists because the gradient vanished."""


class NumericalAbort(SamlabError, ArithmeticError):
    """Training produced a non-finite loss or parameter.

    Carries a snapshot so the failing state can be written to disk.
    """

    def __init__(self, message, *, params=None, epoch=None, batch_index=None):
        super().__init__(message)
        self.params = params
        self.epoch = epoch
        self.batch_index = batch_index
