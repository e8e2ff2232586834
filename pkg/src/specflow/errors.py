"""Exception hierarchy shared by every specflow module."""


class SpecflowError(Exception):
    pass


class AlphaRational(SpecflowError):
    """The continued fraction terminated too early for an irrational rotation."""


class DepthUnreachable(SpecflowError):
    def __init__(self, requested: int, achieved: int):
        super().__init__(
            f"requested depth {requested} but 120-bit resolution only supports {achieved}"
        )
        self.requested = requested
        self.achieved = achieved


class ROutOfRange(SpecflowError):
    pass


class AtSingularity(SpecflowError):
    pass


class OrbitHitsSingularity(SpecflowError):
    def __init__(self, index: int, distance: float = 0.0):
        super().__init__(f"orbit point j={index} lies in the singular clip window")
        self.index = index
        self.distance = distance


class HypothesisViolated(SpecflowError):
    def __init__(self, index: int, message: str = ""):
        super().__init__(message or f"segment T^{index}[x,y] meets the singular window")
        self.index = index


class CodeMismatch(SpecflowError):
    pass


class Infeasible(SpecflowError):
    pass


class DegenerateGrid(SpecflowError):
    pass


class NotClose(SpecflowError):
    pass


class ConfigError(SpecflowError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key is not None:
            where = f" [{key}]"
        if line is not None:
            where += f" (line {line})"
        super().__init__(message + where)
        self.key = key
        self.line = line
