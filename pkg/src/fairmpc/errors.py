"""Exception hierarchy. Every error carries the process exit code the CLI maps it to."""


class FairMPCError(Exception):
    exit_code = 1


class FixedPointOverflow(FairMPCError, OverflowError):
    exit_code = 6


class ShapeMismatch(FairMPCError, ValueError):
    exit_code = 1


class SameParty(FairMPCError, ValueError):
    exit_code = 1


class BadShape(FairMPCError, ValueError):
    exit_code = 1


class BadBlockSize(FairMPCError, ValueError):
    exit_code = 1


class TripleExhausted(FairMPCError):
    exit_code = 5


class InsufficientEntropy(FairMPCError):
    exit_code = 5


class TransportError(FairMPCError, OSError):
    """Connection loss or failure to connect."""

    exit_code = 3


class PeerDesync(FairMPCError):
    exit_code = 4


class BadTag(PeerDesync):
    pass


class PeerAborted(FairMPCError):
    exit_code = 9

    def __init__(self, code: int, message: str = ""):
        super().__init__(message or f"peer aborted with code {code}")
        self.code = code


class NoCommitment(FairMPCError):
    exit_code = 8


class InfeasibleIterate(FairMPCError, ArithmeticError):
    exit_code = 6


class SingularProjection(FairMPCError, ArithmeticError):
    exit_code = 6


class DataError(FairMPCError, ValueError):
    exit_code = 7


class ParseError(DataError):
    pass


class NonBinaryLabel(DataError):
    pass


class EmptyFile(DataError):
    pass


class ZeroVariance(DataError):
    pass


class BadCorrelation(DataError):
    pass


class BadContainer(FairMPCError, ValueError):
    exit_code = 7
