"""Exception types raised by the library's validation contracts."""


class InvalidSpecError(ValueError):
    """A declared parameter or configuration value is out of range."""


class NonDivisibleError(InvalidSpecError):
    """Motif size does not divide the layer neuron count."""


class ShapeMismatchError(ValueError):
    """Array argument has the wrong shape for the receiving operation."""


class EmptyOptionsError(ValueError):
    """A categorical choice was offered zero options."""


class NonFiniteError(ValueError):
    """A value that must be finite is NaN or infinite."""


class UnknownEdgeError(KeyError):
    """Directed pair appears in no candidate edge set."""


class StaleActivityError(ValueError):
    """Activity record does not match the parameters it is replayed against."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient became NaN or infinite; the update is refused."""


class InvalidLabelError(ValueError):
    """Class label outside the readout range."""


class DisjointnessViolationError(ValueError):
    """Train and validation batches share example ids."""


class ParseError(ValueError):
    """Malformed event file; carries the offending line number."""

    def __init__(self, message: str, lineno: int):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class IndexOutOfRangeError(ValueError):
    """Event refers to a neuron index or timestep outside the declared bounds."""


class InvalidRatiosError(ValueError):
    """Split ratios are non-positive or do not sum to one."""


class TooLargeError(ValueError):
    """Input exceeds a brute-force oracle's size guardrail."""


class ConfigError(ValueError):
    """Run configuration failed validation; message names the offending key."""
