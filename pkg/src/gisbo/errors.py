"""Exception taxonomy shared across the toolkit."""


class GisboError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgument(GisboError, ValueError):
    """Caller passed a malformed or out-of-contract argument."""


class UnsupportedDimension(InvalidArgument):
    """Requested dimension exceeds what a generator supports."""


class InsufficientData(GisboError):
    """Not enough observations to fit a surrogate."""


class FitFailed(GisboError):
    """Surrogate fitting failed (e.g. Cholesky failure after max jitter)."""


class InvalidGradient(GisboError):
    """A gradient row contained non-finite entries."""


class NumericError(GisboError):
    """A numerical routine failed to converge or produced non-finite output."""


class InvalidScore(GisboError):
    """An acquisition score vector contained NaN."""


class InvalidConfig(GisboError, ValueError):
    """A run or experiment configuration violates its invariants."""


class BridgeError(GisboError):
    """Base class for external-surrogate bridge failures."""


class SpawnError(BridgeError):
    """The bridge server process could not be launched."""


class ProtocolError(BridgeError):
    """The bridge server violated the wire protocol."""


class RemoteError(BridgeError):
    """The bridge server answered {ok: false}; carries the server message."""


class PreconditionViolation(BridgeError):
    """A request would violate a protocol precondition; nothing was sent."""


class InvalidHandle(BridgeError):
    """Operation on a bridge handle that was already shut down."""
