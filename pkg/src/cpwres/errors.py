"""Exception and warning types raised across the toolkit."""


class CpwresError(Exception):
    """Base class for all toolkit errors."""


class DomainError(CpwresError, ValueError):
    """An argument lies outside the domain of a formula."""


class NegativeKineticInductance(DomainError):
    """Measured frequency is above the purely geometric prediction."""


class DegenerateGeometry(CpwresError, ValueError):
    """Points are collinear or coincident, so no unique circle exists."""


class NoResonanceFound(CpwresError):
    """The trace does not contain a resolvable resonance."""


class NonConvergence(CpwresError):
    """An iterative fit hit its iteration cap without converging."""


class IllConditioned(CpwresError, ValueError):
    """The data cannot identify the requested model parameters."""


class NonPhysicalScattering(CpwresError, ValueError):
    """|S11|^2 + |S21|^2 exceeds unity beyond tolerance."""


class ParseError(CpwresError, ValueError):
    """A trace file could not be parsed."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnsupportedFormat(ParseError):
    """The file is valid Touchstone but not a two-port network."""


class DuplicateFrequency(ParseError):
    """A trace lists the same frequency twice."""


class ConfigError(CpwresError, ValueError):
    """A manifest or configuration file is malformed."""


class FixedPointDivergence(CpwresError):
    """Photon-number self-consistency iteration did not settle."""


class AnalysisAborted(CpwresError):
    """More than half of the traces in a sweep failed."""


class ValidityRangeWarning(UserWarning):
    """A model is evaluated outside its low-temperature validity range."""
