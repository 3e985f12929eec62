"""Exception hierarchy shared by every solver module."""


class EnergyDelayError(Exception):
    """Base class for all errors raised by this package."""


class QueueUnstable(EnergyDelayError, ValueError):
    """Success probability does not exceed the packet arrival rate."""


class DomainError(EnergyDelayError, ValueError):
    """Argument outside the domain where a formula is defined."""


class NoSignChange(EnergyDelayError):
    """Bracket endpoints do not straddle a root."""


class ExpansionFailed(EnergyDelayError):
    """Geometric bracket expansion never found a positive residual."""


class Singular(EnergyDelayError):
    """Linear system I - F is singular."""


class Infeasible(EnergyDelayError):
    """A best-response problem has an empty feasible set."""

    def __init__(self, message, link=None, cause=None):
        super().__init__(message)
        self.link = link
        self.cause = cause


class NoFeasiblePoint(Infeasible):
    """No power vector satisfies every QoS constraint within the box."""


class InfeasibleStart(Infeasible):
    """Starting power vector violates the box or a QoS constraint."""


class ModelViolation(EnergyDelayError):
    """Success function or coefficients break the assumed properties."""


class BlockSolverFailure(EnergyDelayError):
    """A block subproblem of the MBI driver failed."""

    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class AllCandidatesInfeasible(BlockSolverFailure):
    """Every candidate power destabilizes some queue."""


class EmptyInterval(BlockSolverFailure):
    """Floor of a block's feasible interval exceeds its ceiling."""


class InnerSolverFailure(EnergyDelayError):
    """Inner minimizer of Dinkelbach's method failed."""


class NonpositiveDenominator(EnergyDelayError, ValueError):
    """Ratio denominator is not strictly positive."""


class SpecFormatError(EnergyDelayError, ValueError):
    """A scenario or spec file violates the expected schema."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        text = f"{message} ({', '.join(where)})" if where else message
        super().__init__(text)
        self.field = field
        self.line = line


class PlacementFailed(EnergyDelayError, RuntimeError):
    """Users could not be dropped at the required minimum distance."""
