"""Exception taxonomy shared by all svlab modules."""


class SvlabError(Exception):
    """Base class for all svlab errors."""


class ContractError(SvlabError):
    """A caller violated a documented precondition."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class DomainError(SvlabError):
    """A value lies outside the mathematical domain of an operation."""


class NumericsError(SvlabError):
    """A computation produced NaN/Inf or an otherwise unusable number."""


class UnsupportedSystemError(ContractError):
    """The requested operation is not defined for this system kind."""


class InstabilityError(NumericsError):
    """Numerical integration blew up; carries step context in the message."""


class TrainingError(SvlabError):
    """Training failed (divergence, NaN gradients)."""


class ParseError(SvlabError):
    """A file could not be decoded; carries the file name in the message."""
