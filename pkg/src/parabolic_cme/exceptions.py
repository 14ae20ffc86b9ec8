"""Exception hierarchy shared by all modules."""


class ParabolicError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(ParabolicError, ValueError):
    pass


class OutOfWindowError(ParabolicError, ValueError):
    """A query point lies outside the region where the sampled data is trusted."""


class ResolutionError(ParabolicError, ValueError):
    """A requested scale is below what the sampling grid can resolve."""


class ParameterError(ParabolicError, ValueError):
    pass


class AxiomError(ParabolicError):
    """An exact structural property (partition, nesting, ...) failed."""


class SeparationError(ParabolicError):
    pass


class CFLError(ParabolicError, ValueError):
    pass


class ClauseFailure(ParabolicError):
    """A hard inequality failed; carries the clause name and a witness."""

    def __init__(self, clause, witness=None, detail=""):
        self.clause = clause
        self.witness = witness
        msg = f"clause {clause} failed"
        if detail:
            msg += f": {detail}"
        if witness is not None:
            msg += f" (witness {witness})"
        super().__init__(msg)


class ConfigError(ParabolicError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MaximumPrincipleError(ParabolicError):
    """A solver step produced a value outside the range of its inputs."""
