"""Exception types shared across the pipeline."""


class RomforgeError(Exception):
    """Base class for all library errors."""


class ContractError(RomforgeError, ValueError):
    """An argument violates a documented precondition (shape, range, sign)."""


class NonConvergence(RomforgeError):
    """Newton iteration did not reach tolerance."""

    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"Newton did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )


class StepCollapse(RomforgeError):
    """Continuation step fell below the configured minimum."""


class PhaseUndefined(RomforgeError):
    """First-harmonic amplitude is zero, so the phase lag is undefined."""


class RankDeficient(RomforgeError):
    """Snapshot matrix has fewer significant singular values than requested."""

    def __init__(self, rank, requested):
        self.rank = rank
        self.requested = requested
        super().__init__(
            f"snapshot matrix has numerical rank {rank} < requested {requested} modes; "
            "lower N or add snapshots from more parameter instances"
        )


class DegenerateFeature(RomforgeError):
    """A feature has max == min on the training split and cannot be scaled."""


class DegenerateReference(RomforgeError):
    """Reference trajectory is identically zero."""


class TrainingDiverged(RomforgeError):
    """Loss became non-finite during training."""


class ConfigError(RomforgeError):
    """Invalid CLI or pipeline configuration."""
