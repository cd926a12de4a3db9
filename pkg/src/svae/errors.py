"""Exception types shared across the package."""


class SvaeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SvaeError):
    """Shapes of the operands do not line up."""


class ContractError(SvaeError):
    """A documented precondition was violated by the caller."""


class NumericError(SvaeError):
    """A computation produced non-finite values."""


class FormatError(SvaeError):
    """A file does not follow its declared binary/text format."""
