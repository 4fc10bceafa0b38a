"""Exception hierarchy shared by all pipeline stages."""


class RsbError(Exception):
    """Base class for domain errors raised by this package."""


class ModelError(RsbError):
    """A model file or in-memory model description is malformed."""


class PreconditionError(RsbError):
    """An operation was called outside its documented precondition."""


class NotBisimulationError(RsbError):
    """A relation that must be a robust stutter bisimulation is not one."""


class CapExceeded(RsbError):
    """A configured size or iteration cap was exceeded."""


class ExecutorError(RsbError):
    """The concrete controller observed something it cannot explain."""
