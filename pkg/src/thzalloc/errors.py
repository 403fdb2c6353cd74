"""Exception hierarchy shared by the planner, solvers and CLI."""


class ThzAllocError(Exception):
    pass


class ZeroDistance(ThzAllocError):
    pass


class Infeasible(ThzAllocError):
    """Spectrum plan cannot satisfy its constraints."""


class InfeasibleFairness(Infeasible):
    """Fairness floors / association constraints admit no assignment."""


class LpInfeasible(Infeasible):
    pass


class NonIntegralSolution(ThzAllocError):
    """LP vertex is fractional; the unimodularity argument would be broken."""


class EntriesOutOfRange(ThzAllocError):
    pass


class TooLarge(ThzAllocError):
    pass


class BracketFailure(ThzAllocError):
    pass


class ConfigError(ThzAllocError):
    pass


class ParseError(ConfigError):
    pass


class RangeError(ConfigError):
    pass
