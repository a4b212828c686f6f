"""Exception hierarchy shared by all modules."""


class SDDError(Exception):
    """Base class for every error raised by the package."""


# lp_core
class InvalidLP(SDDError, ValueError):
    pass


class Infeasible(SDDError):
    pass


class Unbounded(SDDError):
    pass


class Singular(SDDError):
    pass


class IterationLimit(SDDError):
    pass


# priors
class EmptyFiber(SDDError):
    pass


class DegenerateRank(SDDError):
    pass


class OutsideFiber(SDDError):
    pass


# pointwise
class DegenerateVertex(SDDError):
    pass


class FiberInconsistent(SDDError):
    pass


class NoProgress(SDDError):
    pass


class NoViolatedFacet(SDDError):
    pass


# cumulative / instances / oracles / clo
class InvalidDelta(SDDError, ValueError):
    pass


class BadParams(SDDError, ValueError):
    pass


class BadCorridor(BadParams):
    pass


class TooLarge(SDDError):
    pass


class NonConvergence(SDDError):
    pass


class SingularProjection(SDDError):
    pass


class RankDeficientDesign(SDDError):
    pass


class InvalidParams(SDDError, ValueError):
    pass
