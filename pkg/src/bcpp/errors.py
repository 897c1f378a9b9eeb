"""Error taxonomy shared by all modules.

The CLI maps these onto its exit-code contract: configuration problems
exit 1, a check that ran but missed its tolerance exits 2, anything else
exits 3.
"""


class ConfigurationError(ValueError):
    """Invalid configuration, parameters or domain of use."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge or a tolerance check failed."""
