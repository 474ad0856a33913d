"""Exception hierarchy shared across the toolkit.

Exit-code convention for the CLI: 2 = validation problem, 3 = missing
stage dependency, 4 = gateway/endpoint problem.
"""


class SterError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class GatewayError(SterError):
    """Base class for chat-endpoint failures."""

    exit_code = 4


class DependencyMissing(SterError):
    """A pipeline stage was invoked before its inputs exist."""

    exit_code = 3
