"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, PreconditionError -> 3,
InternalInvariantError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent user-supplied configuration."""


class PreconditionError(ValueError):
    """A documented precondition or budget constraint was violated."""


class EstimateAbortError(PreconditionError):
    """A statistical estimate was too poor to continue (e.g. nonpositive
    normalization estimate); signals insufficient sample count."""


class InternalInvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
