"""Exception hierarchy shared by all modules."""


class VolcpError(Exception):
    """Base class for estimation and simulation failures."""


class NonPositiveDefinite(VolcpError, ArithmeticError):
    pass


class OutOfBox(VolcpError, ValueError):
    pass


class StateExitedDomain(VolcpError, ArithmeticError):
    pass


class NonFinite(VolcpError, ArithmeticError):
    pass


class EmptySegment(VolcpError, ValueError):
    pass


class SegmentTooShort(VolcpError, ValueError):
    pass


class OptimizerFailed(VolcpError, RuntimeError):
    pass


class TruncationTooSmall(VolcpError, RuntimeError):
    pass


class DegenerateChange(VolcpError, ValueError):
    pass


class UnknownTruth(VolcpError, ValueError):
    pass


class SeriesFormatError(VolcpError, ValueError):
    """Malformed series file; ``lineno`` is 1-based and counts the header."""

    def __init__(self, message, lineno=None):
        super().__init__(message if lineno is None else f"line {lineno}: {message}")
        self.lineno = lineno


class McAborted(VolcpError, RuntimeError):
    pass
