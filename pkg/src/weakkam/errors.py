"""Exception types raised by the toolkit."""


class WeakKamError(Exception):
    """Base class for all errors raised by :mod:`weakkam`."""


class ModelAuditError(WeakKamError):
    """A Lagrangian failed its convexity or derivative-consistency audit."""


class NoConvergence(WeakKamError):
    """An iterative solver (Newton, path minimization) did not converge."""


class BadInput(WeakKamError, ValueError):
    """Invalid argument, e.g. a non-positive time horizon."""


class EnergyDriftExceeded(WeakKamError):
    """Integrated orbit violated the configured energy drift bound."""


class SingularHessian(WeakKamError):
    """The fiber Hessian could not be inverted while integrating."""


class BracketNotFound(WeakKamError):
    """The initial interval for the critical value does not straddle it."""


class NotStabilized(WeakKamError):
    """The Peierls ladder still oscillates at the largest time."""

    def __init__(self, msg, ladder=None):
        super().__init__(msg)
        self.ladder = ladder


class LPInfeasible(WeakKamError):
    """The discretized measure LP has no feasible point."""


class SupOnBoundary(WeakKamError):
    """The conjugation supremum was attained on the edge of the c-box."""


class NotConverged(WeakKamError):
    """Lax-Oleinik iteration hit the sweep cap without converging."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history


class DegenerateArgmin(WeakKamError, UserWarning):
    """Several grid minimizers tie within tolerance; the smallest index is used."""
