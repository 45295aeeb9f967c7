"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (non-convergence, singular system)."""


class UnsupportedConfigurationError(ValueError):
    """The requested configuration is outside the modelled scope."""


class ConfigError(ValueError):
    """A scenario configuration failed validation.

    Parameters
    ----------
    problems : list of (field, message)
        Every offending field together with a short reason.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        lines = [f"{field}: {msg}" for field, msg in self.problems]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
