"""Exception hierarchy shared by every module of the package."""


class RcisError(Exception):
    """Base class for all errors raised by implicit_rcis."""


class DimensionMismatch(RcisError, ValueError):
    pass


class NumericalFailure(RcisError, ArithmeticError):
    pass


class ExplosionLimit(RcisError):
    """Fourier-Motzkin produced more intermediate rows than the configured cap."""


class UnboundedDirection(RcisError):
    def __init__(self, coordinate, message=None):
        self.coordinate = coordinate
        super().__init__(message or f"polytope is unbounded along coordinate {coordinate}")


class UnboundedPolytope(RcisError):
    pass


class DimensionTooHigh(RcisError):
    pass


class NotNilpotent(RcisError):
    pass


class NotControllable(RcisError):
    def __init__(self, rank, n):
        self.rank = rank
        self.n = n
        super().__init__(f"(A, B) is not controllable: controllability rank {rank} < {n}")


class StateCountExceedsCap(RcisError):
    pass


class ReachSetExceedsCap(RcisError):
    pass


class UnboundedCsub(RcisError):
    pass


class ContractBreach(RcisError):
    """A supervision step was infeasible although its precondition claimed otherwise."""


class ConfigError(RcisError, ValueError):
    pass
