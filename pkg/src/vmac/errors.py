"""Exception types raised across the package."""


class VmacError(Exception):
    """Base class for package errors."""


class FactorizationError(VmacError, ValueError):
    """A matrix expected to be positive definite failed to factor."""

    def __init__(self, pivot: int, batch_index: int | None = None):
        self.pivot = pivot
        self.batch_index = batch_index
        where = f" (matrix {batch_index} of stack)" if batch_index is not None else ""
        super().__init__(f"matrix is not positive definite: pivot {pivot} failed{where}")


class InfiniteUsageError(VmacError, ValueError):
    """Backhaul usage requested at a zero quantization noise level."""


class InfeasibleError(VmacError):
    """An optimization problem has no feasible point under the given bounds."""


class SolverError(VmacError):
    """A numerical solver failed to converge or bracket."""
