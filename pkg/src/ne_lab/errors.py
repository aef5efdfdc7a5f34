"""Exception hierarchy shared by all ne_lab modules."""


class NeLabError(Exception):
    """Base class for every error raised by ne_lab."""


class GraphError(NeLabError, ValueError):
    """Malformed graph input: unknown agent, self-loop, duplicate edge."""


class ConnectivityError(NeLabError, ValueError):
    """The graph or one of its coalition subgraphs is not strongly connected."""


class WeightError(NeLabError, ValueError):
    """Mixing weights violate the stochasticity or support conditions."""


class DimensionError(NeLabError, ValueError):
    pass


class AssumptionError(NeLabError, ValueError):
    """A quantitative assumption on the costs fails (e.g. non-positive monotonicity)."""


class ConvergenceError(NeLabError, RuntimeError):
    pass


class DivergenceError(NeLabError, RuntimeError):
    """Non-finite or exploding iterate; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class CertificateError(NeLabError, RuntimeError):
    """A contraction certificate could not be established for a named matrix."""

    def __init__(self, message: str, matrix: str):
        super().__init__(message)
        self.matrix = matrix


class ConfigError(NeLabError, ValueError):
    """Scenario file problem; ``location`` names the offending field."""

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
