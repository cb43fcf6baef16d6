"""Exception types raised across the package."""


class ModasmError(Exception):
    """Base class for all package errors."""


class OccupiedCell(ModasmError):
    pass


class NotAvailable(ModasmError):
    pass


class ResourceLimit(ModasmError):
    pass


class MalformedConfig(ModasmError):
    pass


class OutOfRange(ModasmError, ValueError):
    pass


class DimensionMismatch(ModasmError, ValueError):
    pass


class NumericalDivergence(ModasmError):
    pass


class UnknownKind(ModasmError, ValueError):
    pass
