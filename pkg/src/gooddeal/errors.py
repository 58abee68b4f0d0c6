"""Exception types raised across the package."""


class GoodDealError(ValueError):
    """Base class for all domain errors."""


class NotSPD(GoodDealError):
    pass


class DegenerateVolatility(GoodDealError):
    """sigma a sigma^T is numerically singular (ellipticity violated)."""


class InfeasibleTheta(GoodDealError):
    """A drift-ambiguity point breaks the Sharpe-ratio bound |xi + Pi(theta)| < h."""


class InfeasibleKernel(GoodDealError):
    """A Girsanov kernel exceeds the no-good-deal radius h."""


class RegimeError(GoodDealError):
    """A closed form was requested outside the parameter regime it holds in."""


class GridError(GoodDealError):
    pass


class StabilityError(GoodDealError):
    pass


class ConfigError(GoodDealError):
    pass
