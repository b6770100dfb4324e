"""Exception types shared across the package.

Every failure mode has a dedicated class so callers can distinguish
shape bugs from numeric-domain problems from bad files without parsing
message strings.
"""


class FedtwinError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(FedtwinError, ValueError):
    """Tensor shapes or axes do not satisfy an operation's contract."""


class ContractError(FedtwinError, ValueError):
    """A precondition on arguments or call order was violated."""


class NumericDomainError(FedtwinError, ArithmeticError):
    """An operation was applied outside its numeric domain, or produced
    non-finite values."""


class DegenerateBatchError(FedtwinError, ValueError):
    """A batch statistic is degenerate (e.g. zero-variance projection
    dimension), so the step cannot proceed."""


class DegenerateDataError(FedtwinError, ValueError):
    """Input data is degenerate (e.g. an all-zero signal channel)."""


class EmptySubsetError(FedtwinError, ValueError):
    """A dataset filter matched no windows."""


class SplitError(FedtwinError, ValueError):
    """A train/test split cannot be formed (stratum too small)."""


class FormatError(FedtwinError, ValueError):
    """A serialized file is malformed; the message names the offending
    field and, where known, the byte offset."""


class DegenerateWeightsError(FedtwinError, ValueError):
    """Federated averaging weights sum to zero."""


class FederationStallError(FedtwinError, RuntimeError):
    """Every client failed in a federation round; no update is possible."""


class ConfigError(FedtwinError, ValueError):
    """An experiment configuration is invalid or incomplete."""
