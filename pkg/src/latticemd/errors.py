"""Exception types shared across the package."""


class LatticeMDError(Exception):
    """Base class for all errors raised by latticemd."""


class BoundsError(LatticeMDError, IndexError):
    """A lattice coordinate or id lies outside the ghost-inclusive box."""


class DomainError(LatticeMDError, ValueError):
    """A position or argument lies outside the domain an operation accepts."""


class ParseError(LatticeMDError, ValueError):
    """Malformed potential or configuration text.

    ``line`` is the 1-based line number where the problem was detected.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class ConfigError(LatticeMDError, ValueError):
    """Invalid simulation configuration; ``key`` names the offending setting."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class OverlapError(LatticeMDError, RuntimeError):
    """Two atoms sit at zero separation, usually because the timestep is too large."""

    def __init__(self, tag_i, tag_j, step=None):
        self.tags = (int(tag_i), int(tag_j))
        self.step = step
        msg = f"atoms {tag_i} and {tag_j} overlap (r = 0)"
        if step is not None:
            msg += f" at step {step}"
        super().__init__(msg)
