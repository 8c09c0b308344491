"""Exception types raised by the ranging receiver and its configuration layer."""


class RangingError(Exception):
    """Base class for all package errors."""


class ConfigError(RangingError, ValueError):
    """A scenario configuration violates one of its invariants."""


class NoNoiseSubspace(RangingError):
    """MUSIC was asked to run with an empty noise subspace (K >= M)."""


class SingularGram(RangingError):
    """The steering Gram matrix C^H C is singular."""


class NearCollinearCodes(RangingError):
    """Rotated codes are too close to collinear for a stable LS solve."""


class DegenerateTimingSum(RangingError):
    """The adjacent-subcarrier correlation sum is exactly zero."""


class ContractError(RangingError, ValueError):
    """An input violates a documented precondition."""
