"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedOrderError(DomainError):
    """A derivative order (or oscillator level) beyond the supported range."""


class ConfigurationError(ValueError):
    """Invalid truncation, grid or run configuration."""


class NumericError(RuntimeError):
    """A numerical routine failed or produced an unusable result."""


class DegenerateBandError(NumericError):
    """Band is (nearly) degenerate where a non-degenerate band is required.

    Attributes
    ----------
    gap : float
        Smallest distance from the band to its neighbours.
    """

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


class ModelInapplicableError(DomainError):
    """The harmonic effective model is undefined for this critical point."""


class ConfigParseError(ConfigurationError):
    """Parse failure carrying the offending line number and key."""

    def __init__(self, message, line=None, key=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if key is not None:
            loc.append(f"key {key}")
        prefix = f"[{', '.join(loc)}] " if loc else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key
