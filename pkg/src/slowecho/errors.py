"""Exception hierarchy. Each family maps onto a CLI exit code."""


class SlowEchoError(Exception):
    exit_code = 1


class ConfigError(SlowEchoError, ValueError):
    exit_code = 2


class OverlapError(ConfigError):
    pass


class ResolutionError(ConfigError):
    pass


class InstabilityError(SlowEchoError, ArithmeticError):
    exit_code = 3


class BracketError(InstabilityError):
    pass


class AnalysisError(SlowEchoError):
    exit_code = 4


class NoHoleError(AnalysisError):
    pass


class NoPulseError(AnalysisError):
    pass
