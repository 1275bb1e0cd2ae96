"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all numerical-engine failures."""


class SingularBasis(EngineError):
    """Candidate point set is not affinely independent."""


class SeedOutside(EngineError):
    """Flood-fill seed does not satisfy the membership predicate."""


class NotSurrounded(EngineError):
    """No certified surrounding affine basis could be found."""


class MarginExceeded(EngineError):
    """A safety-ball check failed at the finest refinement."""


class DegenerateWeights(EngineError):
    """Simplex weights below floor or centers not distinct."""


class NoConvergence(EngineError):
    """Iteration budget exhausted; carries the best residual seen."""

    def __init__(self, message, best_residual=None, best_value=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best_value = best_value


class BudgetExceeded(EngineError):
    """Doubling search ran out of budget (non-compact or pathological input)."""


class AmpleSliceEmpty(EngineError):
    """A slice component's hull misses the target value; carries the witness jet."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class WindingMismatch(EngineError):
    """Curves have different winding numbers; no regular homotopy exists."""


class StepTooCoarse(EngineError):
    """Angle accumulation step exceeded the safety guard after refinement."""


class Inconsistent(EngineError):
    """Sampled membership contradicts a claimed classification."""
